"""Finite-sample confidence bounds on embedding-based expectations.

The radius attached to a computed safety probability at a query (x, u) is

    B(x, u) = 2 sqrt(sum_i beta_i(x, u)^2 k(y_i, y_i))
            + 3 sqrt(M C^2 ln(2 / delta) / 2),

with C = (2M - 1) rho / ell the bounded-differences constant and ell a
certified positive lower bound on the eigenvalues of (G + lambda M I). The
first term is the data-dependent conditional complexity of the estimate;
the second is a distribution-free deviation term. Natural logarithm
throughout, delta in (0, 2).
"""

import math
from dataclasses import dataclass

import numpy as np

from .embedding import ConditionalEmbedding, _as_matrix
from .exceptions import ParameterError

ELL_METHODS = ("regularization", "gershgorin", "trace")


def eigen_lower_bound(G, lam, method="gershgorin"):
    """Certified lower bound on the eigenvalues of (G + lambda M I).

    regularization: lambda M, valid because G is positive semidefinite.
    gershgorin: disc bound min_i (A_ii - sum_{j != i} |A_ij|), floored at
        lambda M.
    trace: mean(eig) - std(eig) sqrt(M - 1) from tr(A) and tr(A^2), floored
        at lambda M.
    """
    if lam <= 0:
        raise ParameterError(f"lambda must be positive, got {lam}")
    G = np.asarray(G, dtype=float)
    M = G.shape[0]
    shift = lam * M
    if method == "regularization":
        return shift
    if method == "gershgorin":
        diag = np.diag(G)
        off = np.sum(np.abs(G), axis=1) - np.abs(diag)
        return max(shift, float(np.min(diag + shift - off)))
    if method == "trace":
        A = G + shift * np.eye(M)
        mean = np.trace(A) / M
        var = max(np.trace(A @ A) / M - mean**2, 0.0)
        return max(shift, float(mean - math.sqrt(var * (M - 1))))
    raise ParameterError(f"unknown eigenvalue bound method {method!r}")


def model_eigen_lower_bound(model: ConditionalEmbedding, method="gershgorin"):
    """eigen_lower_bound from the scalars cached at fit time."""
    shift = model.lambda_ * model.M_
    if method == "regularization":
        return shift
    if method == "gershgorin":
        return max(shift, model.gershgorin_floor_)
    if method == "trace":
        M = model.M_
        mean = model.trace_a_ / M
        var = max(model.trace_a_sq_ / M - mean**2, 0.0)
        return max(shift, mean - math.sqrt(var * (M - 1)))
    raise ParameterError(f"unknown eigenvalue bound method {method!r}")


def bounded_difference_constant(M, rho, ell):
    """Worst-case change of the empirical expectation when one observation
    is replaced: C = (2M - 1) rho / ell."""
    if M < 1:
        raise ParameterError(f"M must be >= 1, got {M}")
    if rho <= 0:
        raise ParameterError(f"rho must be positive, got {rho}")
    if ell <= 0:
        raise ParameterError(f"ell must be positive, got {ell}")
    return (2.0 * M - 1.0) * rho / ell


@dataclass(frozen=True)
class BoundParams:
    """Scalar ingredients of the bound, fixed per fitted model."""

    delta: float
    rho: float
    ell: float
    C: float
    M: int

    def __post_init__(self):
        # delta = 2 is admitted as the degenerate endpoint: ln(2/2) = 0 makes
        # the deviation term vanish and B collapse to twice the complexity.
        if not 0.0 < self.delta <= 2.0:
            raise ParameterError(f"delta must lie in (0, 2], got {self.delta}")
        expected = bounded_difference_constant(self.M, self.rho, self.ell)
        if not math.isclose(self.C, expected, rel_tol=1e-12):
            raise ParameterError(
                f"C={self.C} inconsistent with (2M-1) rho / ell = {expected}"
            )

    @classmethod
    def build(cls, M, rho, ell, delta):
        return cls(delta=float(delta), rho=float(rho), ell=float(ell),
                   C=bounded_difference_constant(M, rho, ell), M=int(M))

    @classmethod
    def from_model(cls, model: ConditionalEmbedding, delta, method="gershgorin"):
        ell = model_eigen_lower_bound(model, method)
        return cls.build(model.M_, model.kernel_xu_.rho, ell, delta)

    def deviation_term(self):
        """3 sqrt(M C^2 ln(2/delta) / 2); zero exactly at delta = 2."""
        return 3.0 * math.sqrt(self.M * self.C**2 * math.log(2.0 / self.delta) / 2.0)


@dataclass
class BoundReport:
    """Per-point bound values with the parameters that produced them."""

    B: np.ndarray
    params: BoundParams
    ell_method: str


def complexity_term(model: ConditionalEmbedding, X, U):
    """Conditional complexity sqrt(sum_i beta_i^2 k(y_i, y_i)) per query.

    For the Gaussian kernel the successor-diagonal is all ones, so this is
    the Euclidean norm of beta(x, u).
    """
    beta = model.transform(X, U)
    return np.sqrt(beta**2 @ model.y_kernel_diag_)


def bound_B(model, X, U, delta, params: BoundParams = None, method="gershgorin"):
    """Confidence radius B(x, u) per query, shape (Q,)."""
    if params is None:
        params = BoundParams.from_model(model, delta, method=method)
    elif params.delta != delta:
        params = BoundParams.build(params.M, params.rho, params.ell, delta)
    return 2.0 * complexity_term(model, X, U) + params.deviation_term()


def bound_field(model, policy, eval_points, delta, method="gershgorin"):
    """Bound report over evaluation states, queried at (x, pi(x))."""
    eval_points = _as_matrix(eval_points, "eval_points", cols=model.n_)
    params = BoundParams.from_model(model, delta, method=method)
    B = 2.0 * complexity_term(model, eval_points, policy(eval_points))
    B += params.deviation_term()
    return BoundReport(B=B, params=params, ell_method=method)


def select_bandwidth(x, u, y, candidates, probe_x, probe_u, regularization=None):
    """Pick the bandwidth minimizing mean conditional complexity at probes.

    Fits one embedding per candidate on the same sample. Ties break toward
    the smaller bandwidth; duplicated candidates resolve to the first.
    """
    candidates = list(candidates)
    if not candidates:
        raise ParameterError("candidates must be nonempty")
    best_sigma = None
    best_score = None
    for sigma in candidates:
        model = ConditionalEmbedding(
            bandwidth=sigma, regularization=regularization
        ).fit(x, u, y)
        score = float(np.mean(complexity_term(model, probe_x, probe_u)))
        if (
            best_score is None
            or score < best_score
            or (score == best_score and sigma < best_sigma)
        ):
            best_sigma = sigma
            best_score = score
    return best_sigma
