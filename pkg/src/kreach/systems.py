"""Benchmark dynamics, controllers, and transition-sample generation.

Discrete-time transitions are y = f(x, u) + w with w ~ N(0, Sigma) added
once per step. The integrator chain uses its exact discretization; the
continuous benchmarks take one zero-order-hold step of length T with
fixed-step fourth-order Runge-Kutta on the deterministic field, after which
the disturbance is added. All state arguments are vectorized over rows.
"""

import json
import math

import numpy as np

from .embedding import TransitionSample
from .exceptions import (
    DimensionError,
    ParameterError,
    WeightsFormatError,
)


def _cov_matrix(cov, n):
    """Accept a scalar scale (Sigma = scale I) or a full (n, n) matrix."""
    if np.isscalar(cov):
        if cov < 0:
            raise ParameterError(f"covariance scale must be >= 0, got {cov}")
        return float(cov) * np.eye(n)
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (n, n):
        raise DimensionError(f"covariance must be {n}x{n}, got {cov.shape}")
    return cov


def disturbance_factor(cov):
    """A matrix L with L L^T = cov; parameter error when cov is not PSD."""
    cov = np.asarray(cov, dtype=float)
    if np.max(np.abs(cov - cov.T)) > 1e-12:
        raise ParameterError("covariance must be symmetric")
    w, V = np.linalg.eigh(cov)
    if np.min(w) < -1e-12 * max(1.0, np.max(np.abs(w))):
        raise ParameterError(f"covariance is not PSD, min eigenvalue {np.min(w):.3e}")
    return V * np.sqrt(np.clip(w, 0.0, None))


def draw_disturbance(rng, cov, size=None):
    """Zero-mean Gaussian draws with the given covariance.

    size=None returns one (n,) vector; an integer returns (size, n) rows.
    """
    cov = np.asarray(cov, dtype=float)
    L = disturbance_factor(cov)
    n = cov.shape[0]
    if size is None:
        return L @ rng.standard_normal(n)
    return rng.standard_normal((size, n)) @ L.T


def _rk4(field, x, u, T):
    k1 = field(x, u)
    k2 = field(x + 0.5 * T * k1, u)
    k3 = field(x + 0.5 * T * k2, u)
    k4 = field(x + T * k3, u)
    return x + (T / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _System:
    """Shared step plumbing; subclasses provide deterministic(x, u)."""

    affine_deterministic = False

    def __init__(self, T, cov):
        if T <= 0:
            raise ParameterError(f"sampling time must be positive, got {T}")
        self.T = float(T)
        self.cov = _cov_matrix(cov, self.n)

    def _check(self, x, u):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if u.shape[0] == 1 and x.shape[0] > 1:
            u = np.broadcast_to(u, (x.shape[0], u.shape[1]))
        if x.shape[1] != self.n:
            raise DimensionError(f"state has dimension {x.shape[1]}, expected {self.n}")
        if u.shape[1] != self.m or u.shape[0] != x.shape[0]:
            raise DimensionError(
                f"input has shape {u.shape}, expected ({x.shape[0]}, {self.m})"
            )
        return x, u

    def step(self, x, u, w):
        """One transition y = f(x, u) + w; w is drawn by the caller."""
        single = np.asarray(x, dtype=float).ndim == 1
        x, u = self._check(x, u)
        y = self.deterministic(x, u) + np.asarray(w, dtype=float)
        return y[0] if single else y


class IntegratorChain(_System):
    """Stochastic chain of n integrators, exact discretization.

    The state transition matrix has entries T^(j-i)/(j-i)! on and above the
    diagonal and the input enters through [T^n/n!, ..., T^2/2!, T].
    """

    kind = "integrator-chain"
    affine_deterministic = True
    m = 1

    def __init__(self, dim=2, T=0.25, cov=0.01):
        if dim < 1:
            raise ParameterError(f"dim must be >= 1, got {dim}")
        self.n = int(dim)
        super().__init__(T, cov)
        A = np.zeros((self.n, self.n))
        for i in range(self.n):
            for j in range(i, self.n):
                A[i, j] = self.T ** (j - i) / math.factorial(j - i)
        self.a_ = A
        self.b_ = np.array(
            [self.T ** (self.n - i) / math.factorial(self.n - i) for i in range(self.n)]
        )

    def deterministic(self, x, u):
        x, u = self._check(x, u)
        return x @ self.a_.T + u * self.b_


class CartPoleLinear(_System):
    """Cart-pole linearized about the upright pole, state [x, xdot, theta, thetadot]."""

    kind = "cartpole-linear"
    affine_deterministic = True
    n = 4
    m = 1

    _A = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [0.0, -10.95, -2.75, 0.0043],
        [0.0, 0.0, 0.0, 1.0],
        [0.0, 24.92, 28.58, -0.044],
    ])
    _B = np.array([0.0, 1.94, 0.0, -4.44])

    def __init__(self, T=0.1, cov=0.01):
        super().__init__(T, cov)

    def field(self, x, u):
        return x @ self._A.T + u * self._B

    def deterministic(self, x, u):
        x, u = self._check(x, u)
        return _rk4(self.field, x, u, self.T)


class CartPoleNonlinear(_System):
    """Nonlinear cart-pole with bang-bang input, state [x, xdot, theta, thetadot].

    printed_form=True follows the benchmark equations as published, where
    the pole acceleration carries a trailing cos(theta)/m_t factor and the
    cart coupling reads (g sin(theta) - cos(theta)) F. printed_form=False
    uses the standard pole-cart equations instead.
    """

    kind = "cartpole-nonlinear"
    n = 4
    m = 1

    g = 9.8
    pole_mass = 0.1
    half_length = 0.5
    total_mass = 1.1

    def __init__(self, T=0.1, cov=0.01, printed_form=True):
        super().__init__(T, cov)
        self.printed_form = bool(printed_form)

    def field(self, x, u):
        m, l, mt, g = self.pole_mass, self.half_length, self.total_mass, self.g
        th = x[:, 2]
        om = x[:, 3]
        sin, cos = np.sin(th), np.cos(th)
        F = (u[:, 0] + m * l * om**2 * sin) / mt
        den = l * (4.0 / 3.0 - m * cos**2 / mt)
        if self.printed_form:
            thdd = ((g * sin - cos * F) / den) * (cos / mt)
            xdd = F - (m * l * (g * sin - cos) * F / den) * (cos / mt)
        else:
            thdd = (g * sin - cos * F) / den
            xdd = F - m * l * thdd * cos / mt
        return np.stack([x[:, 1], xdd, x[:, 3], thdd], axis=1)

    def deterministic(self, x, u):
        x, u = self._check(x, u)
        return _rk4(self.field, x, u, self.T)


class Pendulum4D(_System):
    """Four-state pendulum benchmark; direction="reverse" negates the field."""

    kind = "pendulum-4d"
    n = 4
    m = 1

    def __init__(self, T=0.1, cov=0.01, direction="forward"):
        super().__init__(T, cov)
        if direction not in ("forward", "reverse"):
            raise ParameterError(f"direction must be forward or reverse, got {direction!r}")
        self.direction = direction

    def field(self, x, u):
        dx = np.stack(
            [x[:, 1], -x[:, 0] + 0.1 * np.sin(x[:, 2]), x[:, 3], u[:, 0]],
            axis=1,
        )
        return -dx if self.direction == "reverse" else dx

    def deterministic(self, x, u):
        x, u = self._check(x, u)
        return _rk4(self.field, x, u, self.T)


SYSTEM_KINDS = {
    cls.kind: cls
    for cls in (IntegratorChain, CartPoleLinear, CartPoleNonlinear, Pendulum4D)
}


# ---------------------------------------------------------------------------
# policies


class ConstantPolicy:
    """pi(x) = value, broadcast over states."""

    def __init__(self, value=0.0, m=1):
        self.value = np.atleast_1d(np.asarray(value, dtype=float))
        if self.value.shape[0] != m:
            self.value = np.full(m, float(value))

    def __call__(self, points):
        points = np.atleast_2d(points)
        return np.tile(self.value, (points.shape[0], 1))


class AffinePolicy:
    """pi(x) = K x + c."""

    def __init__(self, K, c=None):
        self.K = np.atleast_2d(np.asarray(K, dtype=float))
        self.c = np.zeros(self.K.shape[0]) if c is None else np.atleast_1d(
            np.asarray(c, dtype=float)
        )

    def __call__(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return points @ self.K.T + self.c


class MLPController:
    """Feedforward network with rectifier hidden activations.

    layers is an ordered list of (W, b) pairs; the rectifier applies to
    every layer except the last. The output map is either identity or
    sign-scale, which maps a raw scalar to +magnitude when nonnegative and
    -magnitude otherwise.
    """

    def __init__(self, layers, output_map=("identity",)):
        if not layers:
            raise WeightsFormatError("controller needs at least one layer")
        self.layers = []
        prev_rows = None
        for idx, (W, b) in enumerate(layers):
            W = np.atleast_2d(np.asarray(W, dtype=float))
            b = np.atleast_1d(np.asarray(b, dtype=float))
            if b.shape[0] != W.shape[0]:
                raise WeightsFormatError(
                    f"layer {idx}: bias length {b.shape[0]} != rows {W.shape[0]}"
                )
            if prev_rows is not None and W.shape[1] != prev_rows:
                raise WeightsFormatError(
                    f"layer {idx}: expects {W.shape[1]} inputs, previous layer"
                    f" produces {prev_rows}"
                )
            prev_rows = W.shape[0]
            self.layers.append((W, b))
        if output_map[0] not in ("identity", "sign_scale"):
            raise WeightsFormatError(f"unknown output map {output_map[0]!r}")
        if output_map[0] == "sign_scale" and len(output_map) < 2:
            raise WeightsFormatError("sign_scale output map needs a magnitude")
        self.output_map = output_map

    @property
    def m(self):
        return self.layers[-1][0].shape[0]

    def __call__(self, points):
        z = np.atleast_2d(np.asarray(points, dtype=float))
        if z.shape[1] != self.layers[0][0].shape[1]:
            raise DimensionError(
                f"controller expects {self.layers[0][0].shape[1]}-dimensional states,"
                f" got {z.shape[1]}"
            )
        last = len(self.layers) - 1
        for idx, (W, b) in enumerate(self.layers):
            z = z @ W.T + b
            if idx != last:
                np.maximum(z, 0.0, out=z)
        if self.output_map[0] == "sign_scale":
            mag = float(self.output_map[1])
            z = np.where(z >= 0.0, mag, -mag)
        return z


def load_mlp_weights(path) -> MLPController:
    """Load a controller from its JSON weights document.

    Expected shape:
        {"activation": "relu",
         "output_map": {"kind": "identity"}
                        or {"kind": "sign_scale", "magnitude": 10.0},
         "layers": [{"rows": R, "cols": C,
                     "weights": [R*C floats, row-major], "bias": [R floats]}]}
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise WeightsFormatError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("activation") != "relu":
        raise WeightsFormatError(
            f"{path}: activation must be 'relu', got {doc.get('activation')!r}"
        )
    raw_layers = doc.get("layers")
    if not isinstance(raw_layers, list) or not raw_layers:
        raise WeightsFormatError(f"{path}: 'layers' must be a nonempty list")
    layers = []
    for idx, entry in enumerate(raw_layers):
        try:
            rows, cols = int(entry["rows"]), int(entry["cols"])
            weights = np.asarray(entry["weights"], dtype=float)
            bias = np.asarray(entry["bias"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise WeightsFormatError(f"{path}: layer {idx} malformed: {exc}") from exc
        if weights.size != rows * cols:
            raise WeightsFormatError(
                f"{path}: layer {idx} has {weights.size} weights, needs {rows * cols}"
            )
        layers.append((weights.reshape(rows, cols), bias))
    omap = doc.get("output_map", {"kind": "identity"})
    kind = omap.get("kind")
    if kind == "identity":
        output_map = ("identity",)
    elif kind == "sign_scale":
        if "magnitude" not in omap:
            raise WeightsFormatError(f"{path}: sign_scale output map needs 'magnitude'")
        output_map = ("sign_scale", float(omap["magnitude"]))
    else:
        raise WeightsFormatError(f"{path}: unknown output map kind {kind!r}")
    return MLPController(layers, output_map)


def fallback_controller(kind):
    """Scripted stand-in controllers for the benchmark systems.

    The benchmark networks' trained weights are external artifacts; these
    controllers make the pipelines runnable without them. Gains are modest
    hand picks: LQR for the linearized cart-pole, a switching rule matching
    the bang-bang input set for the nonlinear cart-pole, and damped angle
    feedback for the pendulum.
    """
    if kind == "integrator-chain":
        return ConstantPolicy(0.0, m=1)
    if kind == "cartpole-linear":
        return MLPController([(np.array([[3.162, 13.605, 45.785, 9.65]]), np.zeros(1))])
    if kind == "cartpole-nonlinear":
        return MLPController(
            [(np.array([[0.0, 0.0, 1.0, 0.3]]), np.zeros(1))],
            output_map=("sign_scale", 10.0),
        )
    if kind == "pendulum-4d":
        return MLPController([(np.array([[0.0, 0.0, -1.0, -2.0]]), np.zeros(1))])
    raise ParameterError(f"no fallback controller for system kind {kind!r}")


# ---------------------------------------------------------------------------
# sample generation


def sample_iid(system, policy, init_lo, init_hi, M, rng) -> TransitionSample:
    """M transitions from states drawn uniformly in the init box."""
    if M < 1:
        raise ParameterError(f"M must be >= 1, got {M}")
    lo = np.broadcast_to(np.asarray(init_lo, dtype=float), (system.n,))
    hi = np.broadcast_to(np.asarray(init_hi, dtype=float), (system.n,))
    if np.any(lo > hi):
        raise ParameterError("init box requires lo <= hi componentwise")
    x = rng.uniform(lo, hi, size=(M, system.n))
    u = policy(x)
    w = draw_disturbance(rng, system.cov, size=M)
    y = system.step(x, u, w)
    return TransitionSample(x, u, y)


def sample_trajectories(system, policy, inits, steps, rng) -> TransitionSample:
    """Concatenated transitions along closed-loop rollouts from each init."""
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    inits = np.atleast_2d(np.asarray(inits, dtype=float))
    if inits.shape[0] == 0:
        raise ParameterError("inits must be nonempty")
    n_traj = inits.shape[0]
    xs = np.empty((n_traj, steps, system.n))
    us = np.empty((n_traj, steps, system.m))
    ys = np.empty((n_traj, steps, system.n))
    x = inits.copy()
    for k in range(steps):
        u = policy(x)
        w = draw_disturbance(rng, system.cov, size=n_traj)
        y = system.step(x, u, w)
        xs[:, k], us[:, k], ys[:, k] = x, u, y
        x = y
    return TransitionSample(
        xs.reshape(-1, system.n), us.reshape(-1, system.m), ys.reshape(-1, system.n)
    )


def reverse_transitions(sample: TransitionSample) -> TransitionSample:
    """Each transition (x, u, y) becomes (y, u, x)."""
    return TransitionSample(sample.y.copy(), sample.u.copy(), sample.x.copy())


def _uniform_outside(rng, lo, hi, box_lo, box_hi, count, dim):
    """Uniform draws on [lo, hi]^dim rejected from the (box_lo, box_hi) box."""
    out = []
    while len(out) < count:
        cand = rng.uniform(lo, hi, size=(count, dim))
        inside = np.all((cand >= box_lo) & (cand <= box_hi), axis=1)
        out.extend(cand[~inside])
    return np.array(out[:count])


def pendulum_reverse_sample(policy, rng, target_lo, target_hi, *, T=0.1, cov=0.01,
                            n_target=20, n_outside=20, steps=200,
                            trajectory_rows=8000, n_uniform=2000,
                            uniform_lo=-2.1, uniform_hi=2.1) -> TransitionSample:
    """Reverse-time pendulum sample: reversed forward rollouts plus uniform draws.

    Forward trajectories start inside the target box (viable in reverse
    time) and outside it (infeasible examples), are reversed, and evenly
    subsampled to trajectory_rows; n_uniform additional transitions are
    drawn uniformly and stepped through the reverse-time dynamics.
    """
    forward = Pendulum4D(T=T, cov=cov, direction="forward")
    t_lo = np.broadcast_to(np.asarray(target_lo, dtype=float), (forward.n,))
    t_hi = np.broadcast_to(np.asarray(target_hi, dtype=float), (forward.n,))
    inits_in = rng.uniform(t_lo, t_hi, size=(n_target, forward.n))
    inits_out = _uniform_outside(
        rng, uniform_lo, uniform_hi, t_lo, t_hi, n_outside, forward.n
    )
    rolled = sample_trajectories(
        forward, policy, np.vstack([inits_in, inits_out]), steps, rng
    )
    reversed_sample = reverse_transitions(rolled)
    if reversed_sample.M > trajectory_rows:
        keep = np.linspace(0, reversed_sample.M - 1, trajectory_rows).astype(int)
        reversed_sample = TransitionSample(
            reversed_sample.x[keep], reversed_sample.u[keep], reversed_sample.y[keep]
        )
    if n_uniform < 1:
        return reversed_sample
    backward = Pendulum4D(T=T, cov=cov, direction="reverse")
    uniform = sample_iid(backward, policy, uniform_lo, uniform_hi, n_uniform, rng)
    return TransitionSample(
        np.vstack([reversed_sample.x, uniform.x]),
        np.vstack([reversed_sample.u, uniform.u]),
        np.vstack([reversed_sample.y, uniform.y]),
    )
