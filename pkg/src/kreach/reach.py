"""Safety probabilities via the approximate backward recursion.

Terminal-hitting: probability of staying inside the safe set K through step
N-1 and landing in the target T at step N. First-hitting: probability of
reaching T at some step k <= N while staying in K before entry. Both are
computed from a fitted conditional embedding by iterating

    V_N = 1_T,
    V_k(x) = 1_K(x) * clip( beta(x, pi(x))^T V_{k+1} )          (terminal)
    V_k(x) = 1_T(x) + 1_{K \\ T}(x) * clip( ... )               (first-hitting)

where the carried vector holds V_{k+1} evaluated at the sampled successors
y_i, so one stage costs a single M x M solve application regardless of how
many evaluation points are requested afterwards.
"""

import csv
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bounds import BoundParams, complexity_term
from .embedding import ConditionalEmbedding, _as_matrix
from .exceptions import DimensionError, ParameterError

TERMINAL = "terminal-hitting"
FIRST = "first-hitting"


# ---------------------------------------------------------------------------
# state-space regions


class Box:
    """Closed axis-aligned box, optionally constraining a subset of dimensions.

    Parameters
    ----------
    lo, hi : array-like
        Bounds, one entry per constrained dimension.
    dims : sequence of int or None
        Indices of the constrained dimensions. None constrains dimensions
        0 .. len(lo)-1.
    """

    kind = "box"

    def __init__(self, lo, hi, dims=None):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        if self.lo.shape != self.hi.shape:
            raise DimensionError("lo and hi must have equal length")
        if np.any(self.lo > self.hi):
            raise ParameterError("box requires lo <= hi componentwise")
        self.dims = None if dims is None else np.asarray(dims, dtype=int)
        if self.dims is not None and len(self.dims) != len(self.lo):
            raise DimensionError("dims must match the number of bounds")

    def contains(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        sub = points if self.dims is None else points[:, self.dims]
        return np.all((sub >= self.lo) & (sub <= self.hi), axis=1)


class Everything:
    """The whole state space."""

    kind = "everything"

    def contains(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.ones(points.shape[0], dtype=bool)


class EmptySet:
    kind = "empty"

    def contains(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.zeros(points.shape[0], dtype=bool)


class Predicate:
    """Membership by arbitrary vectorized predicate."""

    kind = "predicate"

    def __init__(self, fn, name="predicate"):
        self.fn = fn
        self.name = name

    def contains(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.asarray(self.fn(points), dtype=bool)


def indicator(region, points):
    """1 where the points lie in the region, 0 elsewhere (boxes are closed)."""
    return region.contains(points).astype(float)


# ---------------------------------------------------------------------------
# problem statement and result container


@dataclass(frozen=True)
class SafetySpec:
    """Safe set K, target set T, horizon N, and problem variant."""

    safe: object
    target: object
    horizon: int
    variant: str = TERMINAL

    def __post_init__(self):
        if self.horizon < 1:
            raise ParameterError(f"horizon must be >= 1, got {self.horizon}")
        if self.variant not in (TERMINAL, FIRST):
            raise ParameterError(f"unknown variant {self.variant!r}")


class SafetyField:
    """Safety probabilities over a point set, with optional bound brackets."""

    def __init__(self, points, values, bounds=None):
        self.points = np.atleast_2d(np.asarray(points, dtype=float))
        self.values = np.asarray(values, dtype=float).ravel()
        if self.values.shape[0] != self.points.shape[0]:
            raise DimensionError("values and points must have equal length")
        self.bounds = None
        self.lo = None
        self.hi = None
        if bounds is not None:
            self.attach_bounds(bounds)

    def attach_bounds(self, bounds):
        bounds = np.asarray(bounds, dtype=float).ravel()
        if bounds.shape[0] != self.values.shape[0]:
            raise DimensionError("bounds and values must have equal length")
        if np.any(bounds < 0):
            raise ParameterError("bounds must be nonnegative")
        self.bounds = bounds
        self.lo = np.maximum(0.0, self.values - bounds)
        self.hi = np.minimum(1.0, self.values + bounds)
        return self

    def save(self, path):
        n = self.points.shape[1]
        header = [f"x_{i + 1}" for i in range(n)] + ["value", "bound", "lo", "hi"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i, pt in enumerate(self.points):
                row = [repr(float(v)) for v in pt] + [repr(float(self.values[i]))]
                if self.bounds is None:
                    row += ["", "", ""]
                else:
                    row += [
                        repr(float(self.bounds[i])),
                        repr(float(self.lo[i])),
                        repr(float(self.hi[i])),
                    ]
                writer.writerow(row)

    @classmethod
    def load(cls, path):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            n = sum(1 for name in header if name.startswith("x_"))
            pts, vals, bnds = [], [], []
            for row in reader:
                pts.append([float(v) for v in row[:n]])
                vals.append(float(row[n]))
                bnds.append(float(row[n + 1]) if row[n + 1] != "" else np.nan)
        field = cls(np.array(pts), np.array(vals))
        bnds = np.array(bnds)
        if not np.any(np.isnan(bnds)):
            field.attach_bounds(bnds)
        return field


# ---------------------------------------------------------------------------
# backward recursion


def _zero_policy(points):
    points = np.atleast_2d(points)
    return np.zeros((points.shape[0], 1))


def _stage_vector(model, policy, spec):
    """Run the recursion down to V_1, carried at the sampled successors y_i."""
    y = model.y_
    t_y = indicator(spec.target, y)
    v = t_y.copy()
    if spec.horizon > 1:
        # stage transfer matrix: joint-kernel sections at (y_i, pi(y_i))
        K_stage = model.kernel_vectors(y, policy(y))
        if spec.variant == TERMINAL:
            k_y = indicator(spec.safe, y)
            for _ in range(spec.horizon - 1):
                v = k_y * np.clip(K_stage.T @ model.solve(v), 0.0, 1.0)
        else:
            rest_y = indicator(spec.safe, y) * (1.0 - t_y)
            for _ in range(spec.horizon - 1):
                v = t_y + rest_y * np.clip(K_stage.T @ model.solve(v), 0.0, 1.0)
    return v


def _evaluate(model, policy, spec, points, v):
    """V_0 at arbitrary states from the carried stage vector."""
    points = _as_matrix(points, "eval_points", cols=model.n_)
    K = model.kernel_vectors(points, policy(points))
    stage = np.clip(K.T @ model.solve(v), 0.0, 1.0)
    if spec.variant == TERMINAL:
        return points, indicator(spec.safe, points) * stage
    t_e = indicator(spec.target, points)
    return points, t_e + indicator(spec.safe, points) * (1.0 - t_e) * stage


def _run_recursion(model, policy, spec, eval_points):
    v = _stage_vector(model, policy, spec)
    points, values = _evaluate(model, policy, spec, eval_points, v)
    return SafetyField(points, values)


def terminal_hitting(model, policy, spec: SafetySpec, eval_points) -> SafetyField:
    """Terminal-hitting safety probabilities V_0 at the evaluation points."""
    if spec.variant != TERMINAL:
        raise ParameterError(f"spec variant is {spec.variant!r}, expected terminal")
    return _run_recursion(model, policy or _zero_policy, spec, eval_points)


def first_hitting(model, policy, spec: SafetySpec, eval_points) -> SafetyField:
    """First-hitting safety probabilities; identically 1 on the target set."""
    if spec.variant != FIRST:
        raise ParameterError(f"spec variant is {spec.variant!r}, expected first-hitting")
    return _run_recursion(model, policy or _zero_policy, spec, eval_points)


def compute_field(model, policy, spec, eval_points):
    if spec.variant == TERMINAL:
        return terminal_hitting(model, policy, spec, eval_points)
    return first_hitting(model, policy, spec, eval_points)


# ---------------------------------------------------------------------------
# estimator facade


class StochasticReachability(BaseEstimator):
    """Safety-probability estimator with optional finite-sample bounds.

    Fits a conditional distribution embedding from transition data and runs
    the backward recursion once; predict() then evaluates V_0 at arbitrary
    points against the fitted stage vector.

    Parameters
    ----------
    safe, target : region objects (Box, Everything, EmptySet, Predicate)
    horizon : int, default=5
    variant : str, "terminal-hitting" or "first-hitting"
    policy : callable mapping (Q, n) states to (Q, m) inputs, or None for
        the zero policy
    bandwidth, regularization, rho : embedding parameters
    delta : float or None
        Confidence parameter in (0, 2); bounds are attached by
        predict_field() when set.
    ell_method : str, default="gershgorin"
        Eigenvalue lower-bound method for the bound constant.
    """

    def __init__(self, safe, target, horizon=5, variant=TERMINAL, policy=None,
                 bandwidth=0.1, regularization=None, rho=1.0, delta=None,
                 ell_method="gershgorin"):
        self.safe = safe
        self.target = target
        self.horizon = horizon
        self.variant = variant
        self.policy = policy
        self.bandwidth = bandwidth
        self.regularization = regularization
        self.rho = rho
        self.delta = delta
        self.ell_method = ell_method

    def _spec(self):
        return SafetySpec(self.safe, self.target, self.horizon, self.variant)

    def fit(self, X, U, Y):
        spec = self._spec()
        self.embedding_ = ConditionalEmbedding(
            bandwidth=self.bandwidth,
            regularization=self.regularization,
            rho=self.rho,
        ).fit(X, U, Y)
        policy = self.policy or _zero_policy
        self.stage_values_ = _stage_vector(self.embedding_, policy, spec)
        return self

    def predict(self, points):
        """V_0 at the given states, clipped to [0, 1]."""
        check_is_fitted(self, "stage_values_")
        policy = self.policy or _zero_policy
        _, values = _evaluate(
            self.embedding_, policy, self._spec(), points, self.stage_values_
        )
        return values

    def predict_field(self, points) -> SafetyField:
        """SafetyField at the given states, with bounds when delta is set."""
        values = self.predict(points)
        field = SafetyField(points, values)
        if self.delta is not None:
            policy = self.policy or _zero_policy
            points = np.atleast_2d(np.asarray(points, dtype=float))
            params = BoundParams.from_model(
                self.embedding_, self.delta, method=self.ell_method
            )
            comp = complexity_term(self.embedding_, points, policy(points))
            field.attach_bounds(2.0 * comp + params.deviation_term())
        return field
