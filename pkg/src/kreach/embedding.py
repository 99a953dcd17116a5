"""Conditional distribution embeddings estimated from transition samples.

Given M transition triples (x_i, u_i, y_i) drawn from a stochastic kernel
Q(. | x, u), the regularized least-squares estimate of the conditional
distribution embedding reduces every conditional expectation to a weighted
sum over the sampled successors:

    E[f(Y) | x, u]  ~=  f^T beta(x, u),
    beta(x, u) = (G + lambda M I)^{-1} kvec(x, u),

where G is the Gram matrix of the joint kernel over the sampled (x_i, u_i)
pairs and kvec_i = k((x_i, u_i), (x, u)). The estimator here factorizes the
regularized Gram matrix once at fit time; every later query is a solve plus
an inner product.
"""

import csv

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import DimensionError, EmptyInputError, ParameterError
from .kernels import GaussianRBF, regularized_factorize


def _as_matrix(a, name, rows=None, cols=None):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got ndim={a.ndim}")
    if a.shape[0] == 0:
        raise EmptyInputError(f"{name} is empty")
    if rows is not None and a.shape[0] != rows:
        raise DimensionError(f"{name} has {a.shape[0]} rows, expected {rows}")
    if cols is not None and a.shape[1] != cols:
        raise DimensionError(f"{name} has {a.shape[1]} columns, expected {cols}")
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} contains non-finite values")
    return a


class TransitionSample:
    """M i.i.d. transition triples (x_i, u_i, y_i).

    The rows are assumed drawn from the stochastic kernel, y_i ~ Q(. | x_i, u_i);
    that contract is documented, not checkable.
    """

    def __init__(self, x, u, y):
        self.x = _as_matrix(x, "x")
        self.u = _as_matrix(u, "u", rows=self.x.shape[0])
        self.y = _as_matrix(y, "y", rows=self.x.shape[0], cols=self.x.shape[1])

    @property
    def M(self):
        return self.x.shape[0]

    @property
    def n(self):
        return self.x.shape[1]

    @property
    def m(self):
        return self.u.shape[1]

    def joined(self):
        """The (x, u) rows concatenated, the joint-kernel input."""
        return np.hstack([self.x, self.u])

    def save(self, path):
        n, m = self.n, self.m
        header = (
            [f"x_{i + 1}" for i in range(n)]
            + [f"u_{i + 1}" for i in range(m)]
            + [f"y_{i + 1}" for i in range(n)]
        )
        with open(path, "w", newline="") as fh:
            fh.write(f"# n={n} m={m} M={self.M}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for xi, ui, yi in zip(self.x, self.u, self.y):
                writer.writerow([repr(float(v)) for v in (*xi, *ui, *yi)])

    @classmethod
    def load(cls, path):
        with open(path, newline="") as fh:
            first = fh.readline()
            if not first.startswith("#"):
                raise ParameterError(f"{path}: missing '# n=.. m=.. M=..' line")
            meta = dict(
                token.split("=") for token in first.lstrip("#").split() if "=" in token
            )
            try:
                n, m, M = int(meta["n"]), int(meta["m"]), int(meta["M"])
            except (KeyError, ValueError) as exc:
                raise ParameterError(f"{path}: malformed size line {first!r}") from exc
            reader = csv.reader(fh)
            next(reader)  # column names
            rows = np.array([[float(v) for v in row] for row in reader])
        if rows.shape != (M, 2 * n + m):
            raise DimensionError(
                f"{path}: expected {M} rows of {2 * n + m} values, got {rows.shape}"
            )
        return cls(rows[:, :n], rows[:, n : n + m], rows[:, n + m :])


class ConditionalEmbedding(BaseEstimator):
    """Conditional distribution embedding estimator.

    Parameters
    ----------
    bandwidth : float, default=0.1
        Width of the Gaussian kernel, shared between the state kernel and
        the joint state-input kernel.
    regularization : float or None, default=None
        Regularization parameter lambda. None selects the decaying default
        1 / M at fit time.
    rho : float, default=1.0
        Uniform kernel bound sup sqrt(k(x, x)); 1 for the Gaussian kernel.

    Attributes
    ----------
    kernel_x_ : GaussianRBF
        Kernel on the state space (successor features).
    kernel_xu_ : GaussianRBF
        Joint kernel, applied to concatenated (x, u) vectors.
    lambda_ : float
        Resolved regularization parameter.
    solve_ : SolveHandle
        Factorized (G + lambda M I) over the joint-kernel Gram matrix.
    y_kernel_diag_ : ndarray of shape (M,)
        k(y_i, y_i) for each sampled successor; all ones for the Gaussian.
    gershgorin_floor_ : float
        min_i (A_ii - sum_{j != i} |A_ij|) for A = G + lambda M I, cached at
        fit time so the Gram matrix itself need not be kept.
    trace_a_, trace_a_sq_ : float
        tr(A) and tr(A^2), cached for the trace eigenvalue bound.
    """

    def __init__(self, bandwidth=0.1, regularization=None, rho=1.0):
        self.bandwidth = bandwidth
        self.regularization = regularization
        self.rho = rho

    def fit(self, X, U, Y):
        """Fit the embedding from transition triples.

        Parameters
        ----------
        X : array-like of shape (M, n)
            Conditioning states.
        U : array-like of shape (M, m)
            Conditioning inputs.
        Y : array-like of shape (M, n)
            Sampled successor states.
        """
        X = _as_matrix(X, "X")
        U = _as_matrix(U, "U", rows=X.shape[0])
        Y = _as_matrix(Y, "Y", rows=X.shape[0], cols=X.shape[1])
        M = X.shape[0]
        if self.regularization is None:
            lam = 1.0 / M
        else:
            lam = float(self.regularization)
        if lam <= 0:
            raise ParameterError(f"regularization must be positive, got {lam}")

        self.kernel_x_ = GaussianRBF(self.bandwidth, rho=self.rho)
        self.kernel_xu_ = GaussianRBF(self.bandwidth, rho=self.rho)
        self.x_, self.u_, self.y_ = X, U, Y
        self.z_ = np.hstack([X, U])
        self.M_ = M
        self.n_ = X.shape[1]
        self.m_ = U.shape[1]
        self.lambda_ = lam

        G = self.kernel_xu_.gram(self.z_)
        shift = lam * M
        diag = np.diag(G)
        row_off = np.sum(np.abs(G), axis=1) - np.abs(diag)
        self.gershgorin_floor_ = float(np.min(diag + shift - row_off))
        tr_g = float(np.trace(G))
        fro_sq = float(np.einsum("ij,ij->", G, G))
        self.trace_a_ = tr_g + shift * M
        self.trace_a_sq_ = fro_sq + 2.0 * shift * tr_g + shift**2 * M
        self.solve_ = regularized_factorize(G, lam)
        del G
        self.y_kernel_diag_ = self.kernel_x_.diag(Y)
        return self

    def _query(self, X, U):
        X = _as_matrix(X, "X", cols=self.n_)
        U = _as_matrix(U, "U", rows=X.shape[0], cols=self.m_)
        return np.hstack([X, U])

    def kernel_vectors(self, X, U):
        """Joint-kernel sections k((x_i, u_i), (x, u)), one column per query.

        Returns an array of shape (M, Q).
        """
        check_is_fitted(self, "solve_")
        return self.kernel_xu_.gram(self.z_, self._query(X, U))

    def transform(self, X, U):
        """Coefficient vectors beta(x, u), one row per query, shape (Q, M).

        Coefficients are regression weights and may be negative.
        """
        return self.solve_.solve(self.kernel_vectors(X, U)).T

    def expectation(self, values, X, U):
        """Empirical conditional expectations values^T beta(x, u).

        Returned raw (unclipped); clipping to [0, 1] is the caller's policy.
        The adjoint form k(., q)^T solve(values) is used so a batch of Q
        queries costs one solve instead of Q.
        """
        check_is_fitted(self, "solve_")
        values = np.asarray(values, dtype=float).ravel()
        if values.shape[0] != self.M_:
            raise DimensionError(
                f"values has length {values.shape[0]}, sample has {self.M_}"
            )
        K = self.kernel_vectors(X, U)
        return K.T @ self.solve_.solve(values)

    def solve(self, v):
        """Apply (G + lambda M I)^{-1} to a vector or matrix."""
        check_is_fitted(self, "solve_")
        return self.solve_.solve(v)


def fit_embedding(sample: TransitionSample, bandwidth=0.1, regularization=None,
                  rho=1.0) -> ConditionalEmbedding:
    """Functional fit entry point over a TransitionSample."""
    est = ConditionalEmbedding(
        bandwidth=bandwidth, regularization=regularization, rho=rho
    )
    return est.fit(sample.x, sample.u, sample.y)
