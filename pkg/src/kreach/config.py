"""Experiment configuration: flat key-value files with dotted keys.

One experiment per file. Lines are `key = value`; '#' starts a comment and
blank lines are skipped, so an emitted run manifest (resolved keys plus
timing comments) parses unchanged. Unset optional values are empty strings.
"""

import math
import os

from .bounds import ELL_METHODS
from .exceptions import ConfigError
from .reach import FIRST, TERMINAL
from .systems import SYSTEM_KINDS

EXPERIMENTS = ("integrator", "cartpole-linear", "cartpole-nonlinear", "pendulum", "sweep")
POLICY_KINDS = ("zero", "fallback", "mlp")

_PI_6 = repr(math.pi / 6.0)

_BASE = {
    "experiment": "integrator",
    "seed": "0",
    "system.kind": "integrator-chain",
    "system.dim": "2",
    "system.T": "0.25",
    "system.noise": "0.01",
    "system.printed_form": "true",
    "policy.kind": "zero",
    "policy.controller": "",
    "kernel.sigma": "0.22360679774997896",
    "embedding.lambda": "",
    "sample.mode": "iid",
    "sample.M": "2500",
    "sample.trajectories": "10",
    "sample.steps": "200",
    "sample.truncate": "",
    "sample.init_lo": "-1.1 -1.1",
    "sample.init_hi": "1.1 1.1",
    "sets.safe.kind": "box",
    "sets.safe.lo": "-1 -1",
    "sets.safe.hi": "1 1",
    "sets.safe.dims": "",
    "sets.target.kind": "box",
    "sets.target.lo": "-1 -1",
    "sets.target.hi": "1 1",
    "sets.target.dims": "",
    "horizon": "5",
    "variant": TERMINAL,
    "bound.delta": "0.1",
    "bound.ell_method": "gershgorin",
    "eval.lo": "-1.1 -1.1",
    "eval.hi": "1.1 1.1",
    "eval.counts": "41 41",
    "dp.compare": "true",
    "out.heatmap": "true",
    "sweep.M": "100 400 900 1600 2500 3600",
    "sweep.delta": "0.1 0.3 0.5 0.7 0.9 1.1 1.3 1.5 1.7 1.9",
    # pendulum reverse-time sample composition
    "sample.target_trajectories": "20",
    "sample.outside_trajectories": "20",
    "sample.trajectory_rows": "8000",
    "sample.uniform": "2000",
    "sample.uniform_lo": "-2.1",
    "sample.uniform_hi": "2.1",
}

_OVERRIDES = {
    "integrator": {},
    "cartpole-linear": {
        "system.kind": "cartpole-linear",
        "system.T": "0.1",
        "policy.kind": "fallback",
        "sample.mode": "trajectories",
        "sample.trajectories": "10",
        "sample.steps": "1224",
        "sample.truncate": "12234",
        "sample.init_lo": f"-0.7 -1 -{_PI_6} -1",
        "sample.init_hi": f"0.7 1 {_PI_6} 1",
        "sets.safe.kind": "box",
        "sets.safe.dims": "0 1 2",
        "sets.safe.lo": f"-0.7 -1 -{_PI_6}",
        "sets.safe.hi": f"0.7 1 {_PI_6}",
        "sets.target.kind": "box",
        "sets.target.dims": "2",
        "sets.target.lo": "-0.05",
        "sets.target.hi": "0.05",
        "horizon": "3",
        "eval.lo": f"0 0 -{_PI_6} -1",
        "eval.hi": f"0 0 {_PI_6} 1",
        "eval.counts": "1 1 41 41",
        "dp.compare": "false",
    },
    "cartpole-nonlinear": {
        "system.kind": "cartpole-nonlinear",
        "system.T": "0.1",
        "policy.kind": "fallback",
        "sample.mode": "trajectories",
        "sample.trajectories": "10",
        "sample.steps": "2002",
        "sample.truncate": "",
        "sample.init_lo": f"-0.7 -1 -{_PI_6} -1",
        "sample.init_hi": f"0.7 1 {_PI_6} 1",
        "sets.safe.kind": "everything",
        "sets.target.kind": "box",
        "sets.target.dims": "2",
        "sets.target.lo": "-0.05",
        "sets.target.hi": "0.05",
        "horizon": "3",
        "eval.lo": f"0 0 -{_PI_6} -1",
        "eval.hi": f"0 0 {_PI_6} 1",
        "eval.counts": "1 1 41 41",
        "dp.compare": "false",
    },
    "pendulum": {
        "system.kind": "pendulum-4d",
        "system.T": "0.1",
        "policy.kind": "fallback",
        "sample.mode": "pendulum-reverse",
        "sets.safe.kind": "everything",
        "sets.target.kind": "box",
        "sets.target.lo": "0.6 -0.7 -0.4 0.5",
        "sets.target.hi": "0.7 -0.6 -0.3 0.6",
        "horizon": "200",
        "variant": FIRST,
        "bound.delta": "1",
        "eval.lo": "-2.1 -2.1 -0.35 0.55",
        "eval.hi": "2.1 2.1 -0.35 0.55",
        "eval.counts": "21 21 1 1",
        "dp.compare": "false",
    },
    "sweep": {
        "eval.lo": "-1 -1",
        "eval.hi": "1 1",
        "eval.counts": "41 41",
        "dp.compare": "false",
        "out.heatmap": "false",
    },
}


def defaults_for(experiment):
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}")
    resolved = dict(_BASE)
    resolved.update(_OVERRIDES[experiment])
    resolved["experiment"] = experiment
    return resolved


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


class ExperimentConfig:
    """Typed view over the flat key-value store, with defaults filled in."""

    def __init__(self, values):
        experiment = values.get("experiment", _BASE["experiment"])
        self.values = defaults_for(experiment)
        self.unknown = sorted(set(values) - set(self.values))
        for key, val in values.items():
            if key in self.values:
                self.values[key] = val

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls(parse_config_text(fh.read()))

    # typed accessors; raise ConfigError with the offending key

    def raw(self, key):
        return self.values[key]

    def text(self, key):
        return self.values[key].strip()

    def floatval(self, key):
        try:
            return float(self.values[key])
        except ValueError as exc:
            raise ConfigError(key, f"not a number: {self.values[key]!r}") from exc

    def intval(self, key):
        try:
            return int(self.values[key])
        except ValueError as exc:
            raise ConfigError(key, f"not an integer: {self.values[key]!r}") from exc

    def boolval(self, key):
        val = self.values[key].lower()
        if val in ("true", "1", "yes"):
            return True
        if val in ("false", "0", "no"):
            return False
        raise ConfigError(key, f"not a boolean: {self.values[key]!r}")

    def vector(self, key):
        try:
            return [float(v) for v in self.values[key].split()]
        except ValueError as exc:
            raise ConfigError(key, f"not a vector: {self.values[key]!r}") from exc

    def intlist(self, key):
        try:
            return [int(v) for v in self.values[key].split()]
        except ValueError as exc:
            raise ConfigError(key, f"not an integer list: {self.values[key]!r}") from exc

    def optional_float(self, key):
        return None if self.values[key].strip() == "" else self.floatval(key)

    def optional_int(self, key):
        return None if self.values[key].strip() == "" else self.intval(key)

    @property
    def experiment(self):
        return self.values["experiment"]

    def state_dim(self):
        kind = self.text("system.kind")
        if kind == "integrator-chain":
            return self.intval("system.dim")
        return 4

    # ------------------------------------------------------------------

    def validate(self):
        """Dry-run precondition check; returns a list of violations."""
        out = []

        def bad(key, msg):
            out.append(f"{key}: {msg}")

        for key in self.unknown:
            bad(key, "unknown key")

        if self.experiment not in EXPERIMENTS:
            bad("experiment", f"unknown experiment {self.experiment!r}")
            return out

        def checked(key, fn):
            try:
                return fn(key)
            except ConfigError as exc:
                out.append(str(exc))
                return None

        kind = self.text("system.kind")
        if kind not in SYSTEM_KINDS:
            bad("system.kind", f"unknown system kind {kind!r}")
            return out
        n = self.state_dim()

        T = checked("system.T", self.floatval)
        if T is not None and T <= 0:
            bad("system.T", f"sampling time must be positive, got {T}")
        noise = checked("system.noise", self.floatval)
        if noise is not None and noise < 0:
            bad("system.noise", f"noise scale must be >= 0, got {noise}")
        dim = checked("system.dim", self.intval)
        if dim is not None and dim < 1:
            bad("system.dim", f"dimension must be >= 1, got {dim}")

        sigma = checked("kernel.sigma", self.floatval)
        if sigma is not None and sigma <= 0:
            bad("kernel.sigma", f"bandwidth must be positive, got {sigma}")
        lam = checked("embedding.lambda", self.optional_float)
        if lam is not None and lam <= 0:
            bad("embedding.lambda", f"lambda must be positive, got {lam}")

        pol = self.text("policy.kind")
        if pol not in POLICY_KINDS:
            bad("policy.kind", f"unknown policy kind {pol!r}")
        if pol == "mlp":
            path = self.text("policy.controller")
            if not path:
                bad("policy.controller", "mlp policy needs a weights file")
            elif not os.path.exists(path):
                bad("policy.controller", f"weights file not found: {path}")

        mode = self.text("sample.mode")
        if mode not in ("iid", "trajectories", "pendulum-reverse"):
            bad("sample.mode", f"unknown sample mode {mode!r}")
        M = checked("sample.M", self.intval)
        if mode == "iid" and M is not None and M < 1:
            bad("sample.M", f"M must be >= 1, got {M}")
        for key in ("sample.trajectories", "sample.steps"):
            v = checked(key, self.intval)
            if mode == "trajectories" and v is not None and v < 1:
                bad(key, f"must be >= 1, got {v}")
        trunc = checked("sample.truncate", self.optional_int)
        if mode == "trajectories" and trunc is not None:
            total = self.intval("sample.trajectories") * self.intval("sample.steps")
            if trunc < 1 or trunc > total:
                bad("sample.truncate", f"must lie in [1, {total}], got {trunc}")
        init_lo = checked("sample.init_lo", self.vector)
        init_hi = checked("sample.init_hi", self.vector)
        if init_lo is not None and init_hi is not None and mode != "pendulum-reverse":
            if len(init_lo) != n or len(init_hi) != n:
                bad("sample.init_lo", f"init box must have {n} entries")
            elif any(a > b for a, b in zip(init_lo, init_hi)):
                bad("sample.init_lo", "init box requires lo <= hi")

        for name in ("safe", "target"):
            skind = self.text(f"sets.{name}.kind")
            if skind not in ("box", "everything", "empty"):
                bad(f"sets.{name}.kind", f"unknown set kind {skind!r}")
                continue
            if skind != "box":
                continue
            lo = checked(f"sets.{name}.lo", self.vector)
            hi = checked(f"sets.{name}.hi", self.vector)
            dims = checked(f"sets.{name}.dims", self.intlist)
            if lo is None or hi is None:
                continue
            width = len(dims) if dims else n
            if len(lo) != width or len(hi) != width:
                bad(f"sets.{name}.lo", f"expected {width} bounds, got {len(lo)}")
            elif any(a > b for a, b in zip(lo, hi)):
                bad(f"sets.{name}.lo", "box requires lo <= hi")
            if dims and any(d < 0 or d >= n for d in dims):
                bad(f"sets.{name}.dims", f"dimension indices must lie in [0, {n})")

        horizon = checked("horizon", self.intval)
        if horizon is not None and horizon < 1:
            bad("horizon", f"horizon must be >= 1, got {horizon}")
        if self.text("variant") not in (TERMINAL, FIRST):
            bad("variant", f"unknown variant {self.text('variant')!r}")

        delta = checked("bound.delta", self.floatval)
        if delta is not None and not 0.0 < delta < 2.0:
            bad("bound.delta", f"delta outside (0, 2): {delta}")
        if self.text("bound.ell_method") not in ELL_METHODS:
            bad("bound.ell_method", f"unknown method {self.text('bound.ell_method')!r}")

        eval_lo = checked("eval.lo", self.vector)
        eval_hi = checked("eval.hi", self.vector)
        counts = checked("eval.counts", self.intlist)
        if None not in (eval_lo, eval_hi, counts):
            if not (len(eval_lo) == len(eval_hi) == len(counts) == n):
                bad("eval.counts", f"evaluation grid must have {n} entries per key")
            else:
                for d, (a, b, c) in enumerate(zip(eval_lo, eval_hi, counts)):
                    if c < 1:
                        bad("eval.counts", f"dimension {d}: counts must be >= 1")
                    elif c == 1 and a != b:
                        bad("eval.counts", f"dimension {d}: single-point axis needs lo == hi")
                    elif c > 1 and a >= b:
                        bad("eval.lo", f"dimension {d}: lo must be < hi")

        if self.experiment == "sweep":
            sw_m = checked("sweep.M", self.intlist)
            if sw_m is not None and (not sw_m or any(v < 1 for v in sw_m)):
                bad("sweep.M", "needs a nonempty list of M >= 1")
            sw_d = checked("sweep.delta", self.vector)
            if sw_d is not None and (not sw_d or any(not 0.0 < v < 2.0 for v in sw_d)):
                bad("sweep.delta", "every delta must lie in (0, 2)")

        checked("seed", self.intval)
        return out

    def resolved_lines(self):
        """Canonically ordered `key = value` lines for the run manifest."""
        order = list(defaults_for(self.experiment))
        return [f"{key} = {self.values[key]}" for key in order]
