"""Ground-truth validation: grid dynamic programming and Monte Carlo.

dp_solve exploits the known structure of the validation systems: an affine
deterministic step plus additive diagonal Gaussian noise, so the one-step
transition mass into each grid cell is an exact product of per-dimension
Gaussian interval probabilities. Values between nodes are read off by
multilinear interpolation; cells outside the grid contribute zero mass,
which is sound whenever the safe set lies inside the grid.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.special import ndtr

from .exceptions import (
    DimensionError,
    ParameterError,
    UnsupportedConfigurationError,
)
from .reach import TERMINAL, Box, SafetyField, indicator
from .systems import draw_disturbance

_POINT_CHUNK = 256


class Grid:
    """Rectangular grid with per-dimension nodes and owning-cell edges."""

    def __init__(self, lo, hi, counts):
        self.lo = np.atleast_1d(np.asarray(lo, dtype=float))
        self.hi = np.atleast_1d(np.asarray(hi, dtype=float))
        self.counts = np.atleast_1d(np.asarray(counts, dtype=int))
        if not (self.lo.shape == self.hi.shape == self.counts.shape):
            raise DimensionError("lo, hi, counts must have equal length")
        if np.any(self.counts < 2):
            raise ParameterError("grids need at least 2 nodes per dimension")
        if np.any(self.lo >= self.hi):
            raise ParameterError("grid requires lo < hi componentwise")
        self.axes = [
            np.linspace(self.lo[d], self.hi[d], self.counts[d])
            for d in range(len(self.counts))
        ]

    @property
    def dim(self):
        return len(self.axes)

    @property
    def shape(self):
        return tuple(self.counts)

    def points(self):
        """All nodes as rows, first axis varying slowest."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def cell_edges(self, d):
        """Cell boundaries along dimension d: midpoints between nodes,
        extended by half a spacing past the end nodes."""
        ax = self.axes[d]
        h = ax[1] - ax[0]
        inner = (ax[:-1] + ax[1:]) / 2.0
        return np.concatenate(([ax[0] - h / 2.0], inner, [ax[-1] + h / 2.0]))

    def interpolate(self, values, points):
        """Multilinear lookup of node values; zero outside the grid."""
        values = np.asarray(values, dtype=float).reshape(self.shape)
        interp = RegularGridInterpolator(
            self.axes, values, bounds_error=False, fill_value=0.0
        )
        return interp(np.atleast_2d(np.asarray(points, dtype=float)))


def _check_sets_within(grid, spec):
    for name, region in (("safe", spec.safe), ("target", spec.target)):
        if isinstance(region, Box):
            dims = region.dims if region.dims is not None else np.arange(len(region.lo))
            if np.any(region.lo < grid.lo[dims]) or np.any(region.hi > grid.hi[dims]):
                raise ParameterError(f"{name} set exceeds the grid extent")
        elif region.kind == "everything":
            raise ParameterError(f"{name} set must be bounded within the grid")


def _expected_values(grid, values, means, stds):
    """E[V(next)] per mean, cells weighted by diagonal-Gaussian masses."""
    P = means.shape[0]
    out = np.empty(P)
    V = np.asarray(values, dtype=float).reshape(grid.shape)
    for start in range(0, P, _POINT_CHUNK):
        mu = means[start : start + _POINT_CHUNK]
        res = None
        for d in range(grid.dim):
            edges = grid.cell_edges(d)
            z = ndtr((edges[None, :] - mu[:, d : d + 1]) / stds[d])
            mass = z[:, 1:] - z[:, :-1]
            if res is None:
                # (B, c0) x (c0, rest) -> (B, rest)
                res = mass @ V.reshape(grid.shape[0], -1)
            else:
                rest = res.shape[1] // mass.shape[1]
                res = np.einsum(
                    "bcr,bc->br", res.reshape(len(mu), mass.shape[1], rest), mass
                )
        out[start : start + _POINT_CHUNK] = res[:, 0]
    return out


def _dp_recursion(grid, system, policy, spec, stds):
    points = grid.points()
    t_pts = indicator(spec.target, points)
    means = system.deterministic(points, policy(points))
    values = t_pts.copy()
    if spec.variant == TERMINAL:
        k_pts = indicator(spec.safe, points)
        for _ in range(spec.horizon):
            values = k_pts * _expected_values(grid, values, means, stds)
    else:
        rest = indicator(spec.safe, points) * (1.0 - t_pts)
        for _ in range(spec.horizon):
            values = t_pts + rest * _expected_values(grid, values, means, stds)
    return values.reshape(grid.shape)


def dp_solve(grid: Grid, system, policy, spec, refine=1):
    """Backward recursion on the grid with the exact Gaussian cell masses.

    Requires a system with an affine deterministic part and diagonal noise
    covariance; the safe and target sets must lie within the grid. With
    refine > 1 the recursion runs on an internally subdivided grid whose
    nodes include the requested ones, trimming discretization error, and
    the returned array is restricted back to the requested nodes.
    """
    if not getattr(system, "affine_deterministic", False):
        raise UnsupportedConfigurationError(
            f"dp_solve supports affine systems only, got {type(system).__name__}"
        )
    cov = system.cov
    if np.max(np.abs(cov - np.diag(np.diag(cov)))) > 0:
        raise UnsupportedConfigurationError("dp_solve requires diagonal covariance")
    stds = np.sqrt(np.diag(cov))
    if np.any(stds <= 0):
        raise UnsupportedConfigurationError("dp_solve requires nondegenerate noise")
    if grid.dim != system.n:
        raise DimensionError(f"grid is {grid.dim}-dimensional, system has n={system.n}")
    if refine < 1:
        raise ParameterError(f"refine must be >= 1, got {refine}")
    _check_sets_within(grid, spec)

    if refine == 1:
        return _dp_recursion(grid, system, policy, spec, stds)
    fine = Grid(grid.lo, grid.hi, (grid.counts - 1) * refine + 1)
    values = _dp_recursion(fine, system, policy, spec, stds)
    return values[tuple(slice(None, None, refine) for _ in range(grid.dim))]


def monte_carlo(system, policy, spec, x0, rollouts, rng):
    """Empirical probability of the variant's event from x0, seeded rollouts."""
    if rollouts < 1:
        raise ParameterError(f"rollouts must be >= 1, got {rollouts}")
    x = np.tile(np.asarray(x0, dtype=float), (rollouts, 1))
    if spec.variant == TERMINAL:
        ok = spec.safe.contains(x)
        for _ in range(spec.horizon):
            w = draw_disturbance(rng, system.cov, size=rollouts)
            x = system.step(x, policy(x), w)
            ok_before = ok
            ok = ok & spec.safe.contains(x)
        hits = ok_before & spec.target.contains(x)
    else:
        hits = spec.target.contains(x)
        alive = ~hits & spec.safe.contains(x)
        for _ in range(spec.horizon):
            w = draw_disturbance(rng, system.cov, size=rollouts)
            x = system.step(x, policy(x), w)
            entered = alive & spec.target.contains(x)
            hits = hits | entered
            alive = alive & ~entered & spec.safe.contains(x)
    return float(np.mean(hits))


@dataclass(frozen=True)
class ErrorStats:
    max_abs: float
    mean_abs: float


def _values_of(obj):
    if isinstance(obj, SafetyField):
        return obj.values
    return np.asarray(obj, dtype=float).ravel()


def compare(a, b) -> ErrorStats:
    """Max and mean absolute difference between two fields or value grids."""
    va, vb = _values_of(a), _values_of(b)
    if va.shape != vb.shape:
        raise DimensionError(f"shape mismatch: {va.shape} vs {vb.shape}")
    if isinstance(a, SafetyField) and isinstance(b, SafetyField):
        if not np.array_equal(a.points, b.points):
            raise DimensionError("fields are defined over different point sets")
    diff = np.abs(va - vb)
    return ErrorStats(max_abs=float(np.max(diff)), mean_abs=float(np.mean(diff)))
