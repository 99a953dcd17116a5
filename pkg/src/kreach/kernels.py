"""Kernel evaluation, Gram matrices, and regularized positive-definite solves.

The embedding estimate only ever touches data through a bounded kernel and
the factorization of the regularized Gram matrix (G + lambda M I). Both live
here so the numerical policy (symmetrization, jitter retry) is in one place.
"""

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .exceptions import (
    DimensionError,
    EmptyInputError,
    NumericalError,
    ParameterError,
)


def _as_points(A, name):
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A.reshape(1, -1)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be a point or a list of points")
    if A.shape[0] == 0:
        raise EmptyInputError(f"{name} is empty")
    return A


class GaussianRBF:
    """Gaussian radial basis kernel k(a, b) = exp(-||a - b||^2 / (2 sigma^2)).

    Parameters
    ----------
    bandwidth : float
        Kernel width sigma, in the units of the input space. Must be positive.
    rho : float, default=1.0
        Uniform bound on sup sqrt(k(x, x)); exactly 1 for this kernel.
    """

    family = "gaussian-rbf"

    def __init__(self, bandwidth, rho=1.0):
        if bandwidth <= 0:
            raise ParameterError(f"bandwidth must be positive, got {bandwidth}")
        if rho <= 0:
            raise ParameterError(f"rho must be positive, got {rho}")
        self.bandwidth = float(bandwidth)
        self.rho = float(rho)

    def __call__(self, a, b):
        a = np.asarray(a, dtype=float).ravel()
        b = np.asarray(b, dtype=float).ravel()
        if a.shape != b.shape:
            raise DimensionError(
                f"points have mismatched dimensions {a.shape[0]} and {b.shape[0]}"
            )
        d2 = float(np.sum((a - b) ** 2))
        return float(np.exp(-d2 / (2.0 * self.bandwidth**2)))

    def gram(self, A, B=None):
        """Gram matrix of pairwise kernel values.

        With B omitted the result is symmetrized so that it equals its own
        transpose exactly, which the downstream factorization relies on.
        """
        A = _as_points(A, "A")
        symmetric = B is None
        B = A if symmetric else _as_points(B, "B")
        if A.shape[1] != B.shape[1]:
            raise DimensionError(
                f"point sets have mismatched dimensions {A.shape[1]} and {B.shape[1]}"
            )
        sa = np.einsum("ij,ij->i", A, A)
        sb = sa if symmetric else np.einsum("ij,ij->i", B, B)
        d2 = sa[:, None] + sb[None, :] - 2.0 * (A @ B.T)
        np.maximum(d2, 0.0, out=d2)
        d2 /= -2.0 * self.bandwidth**2
        G = np.exp(d2, out=d2)
        if symmetric:
            # BLAS matmul is not exactly symmetric; averaging is
            G += G.T
            G *= 0.5
        return G

    def diag(self, A):
        A = _as_points(A, "A")
        return np.ones(A.shape[0])


class SolveHandle:
    """Triangular factorization of (G + lambda M I), applied via solve().

    Immutable after construction; safe to share across threads for
    concurrent solves.
    """

    def __init__(self, factor, lam, M):
        self._factor = factor
        self.lam = lam
        self.M = M

    def solve(self, v):
        """Solve (G + lambda M I) w = v for a vector or matrix right side."""
        v = np.asarray(v, dtype=float)
        if v.shape[0] != self.M:
            raise DimensionError(
                f"right side has {v.shape[0]} rows, factorization has {self.M}"
            )
        return cho_solve(self._factor, v, check_finite=False)


def regularized_factorize(G, lam):
    """Factorize (G + lambda M I) for repeated solves.

    G must be symmetric positive semidefinite; lambda > 0 then guarantees a
    positive definite system. On a factorization failure (rank-deficient G
    from duplicated points can be singular to working precision) one retry
    is made with 1e-10 * M added to the diagonal.
    """
    G = np.asarray(G, dtype=float)
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionError(f"G must be square, got shape {G.shape}")
    asym = np.max(np.abs(G - G.T)) if G.size else 0.0
    if asym > 1e-10:
        raise ParameterError(f"G must be symmetric, max asymmetry {asym:.3e}")
    M = G.shape[0]
    shift = lam * M
    A = G + shift * np.eye(M)
    try:
        factor = cho_factor(A, lower=True, overwrite_a=True, check_finite=False)
    except LinAlgError:
        A = G + (shift + 1e-10 * M) * np.eye(M)
        try:
            factor = cho_factor(A, lower=True, overwrite_a=True, check_finite=False)
        except LinAlgError as exc:
            raise NumericalError(
                f"factorization of (G + {shift:.3e} I) failed after jitter retry"
            ) from exc
    return SolveHandle(factor, lam, M)
