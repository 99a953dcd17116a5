"""Command line front end.

Verbs:
  run       execute one experiment from a config file and write artifacts
  validate  dry-run a config file and report precondition violations
  sweep     tabulate the mean confidence bound over sample sizes and deltas
  compare   print error statistics between two safety field CSV files

A run directory receives the transition sample, the safety field with
bounds, optional grayscale heatmaps, the grid-recursion cross-check for
systems that support it, and a manifest. The manifest is itself a valid
config file, so `kreach run --config <run>/manifest.txt` repeats the run;
repeated runs write byte-identical CSV files.
"""

import argparse
import os
import sys
import time

import numpy as np

from .bounds import BoundParams, complexity_term, model_eigen_lower_bound
from .config import ExperimentConfig
from .embedding import ConditionalEmbedding, TransitionSample
from .exceptions import ConfigError
from .oracle import Grid, compare, dp_solve
from .reach import Box, EmptySet, Everything, SafetyField, SafetySpec, compute_field
from .systems import (
    CartPoleLinear,
    CartPoleNonlinear,
    ConstantPolicy,
    IntegratorChain,
    Pendulum4D,
    fallback_controller,
    load_mlp_weights,
    pendulum_reverse_sample,
    sample_iid,
    sample_trajectories,
)


def build_system(cfg):
    kind = cfg.text("system.kind")
    T = cfg.floatval("system.T")
    cov = cfg.floatval("system.noise")
    if kind == "integrator-chain":
        return IntegratorChain(dim=cfg.intval("system.dim"), T=T, cov=cov)
    if kind == "cartpole-linear":
        return CartPoleLinear(T=T, cov=cov)
    if kind == "cartpole-nonlinear":
        return CartPoleNonlinear(T=T, cov=cov, printed_form=cfg.boolval("system.printed_form"))
    if kind == "pendulum-4d":
        return Pendulum4D(T=T, cov=cov)
    raise ConfigError("system.kind", f"unknown system kind {kind!r}")


def build_policy(cfg, system):
    kind = cfg.text("policy.kind")
    if kind == "zero":
        return ConstantPolicy(0.0, m=system.m)
    if kind == "fallback":
        return fallback_controller(system.kind)
    if kind == "mlp":
        return load_mlp_weights(cfg.text("policy.controller"))
    raise ConfigError("policy.kind", f"unknown policy kind {kind!r}")


def build_region(cfg, name):
    kind = cfg.text(f"sets.{name}.kind")
    if kind == "everything":
        return Everything()
    if kind == "empty":
        return EmptySet()
    dims = cfg.intlist(f"sets.{name}.dims")
    return Box(cfg.vector(f"sets.{name}.lo"), cfg.vector(f"sets.{name}.hi"),
               dims=dims or None)


def build_spec(cfg):
    return SafetySpec(safe=build_region(cfg, "safe"), target=build_region(cfg, "target"),
                      horizon=cfg.intval("horizon"), variant=cfg.text("variant"))


def eval_points(cfg):
    """Evaluation lattice; single-count axes pin a coordinate (slice views)."""
    lo = cfg.vector("eval.lo")
    hi = cfg.vector("eval.hi")
    counts = cfg.intlist("eval.counts")
    axes = [np.linspace(a, b, c) if c > 1 else np.array([a])
            for a, b, c in zip(lo, hi, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])
    return points, counts


def draw_sample(cfg, system, policy, rng):
    mode = cfg.text("sample.mode")
    if mode == "iid":
        return sample_iid(system, policy, cfg.vector("sample.init_lo"),
                          cfg.vector("sample.init_hi"), cfg.intval("sample.M"), rng)
    if mode == "trajectories":
        lo = np.asarray(cfg.vector("sample.init_lo"))
        hi = np.asarray(cfg.vector("sample.init_hi"))
        count = cfg.intval("sample.trajectories")
        inits = rng.uniform(lo, hi, size=(count, lo.size))
        sample = sample_trajectories(system, policy, inits, cfg.intval("sample.steps"), rng)
        keep = cfg.optional_int("sample.truncate")
        if keep is not None and keep < sample.M:
            sample = TransitionSample(sample.x[:keep], sample.u[:keep], sample.y[:keep])
        return sample
    if mode == "pendulum-reverse":
        return pendulum_reverse_sample(
            policy, rng,
            cfg.vector("sets.target.lo"), cfg.vector("sets.target.hi"),
            T=cfg.floatval("system.T"), cov=cfg.floatval("system.noise"),
            n_target=cfg.intval("sample.target_trajectories"),
            n_outside=cfg.intval("sample.outside_trajectories"),
            steps=cfg.intval("sample.steps"),
            trajectory_rows=cfg.intval("sample.trajectory_rows"),
            n_uniform=cfg.intval("sample.uniform"),
            uniform_lo=cfg.floatval("sample.uniform_lo"),
            uniform_hi=cfg.floatval("sample.uniform_hi"))
    raise ConfigError("sample.mode", f"unknown sample mode {mode!r}")


def write_pgm(path, image):
    """8-bit binary grayscale; values are clipped to [0, 1] then scaled."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError(f"heatmap image must be 2d, got shape {image.shape}")
    data = np.rint(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def _maybe_heatmap(cfg, out_dir, values, counts, stem):
    if not cfg.boolval("out.heatmap"):
        return
    plane = [c for c in counts if c > 1]
    if len(plane) != 2:
        return
    image = np.squeeze(np.asarray(values).reshape(counts))
    write_pgm(os.path.join(out_dir, f"{stem}.pgm"), image)


def write_manifest(path, cfg, timings):
    lines = ["# resolved run configuration; reusable as --config"]
    lines += cfg.resolved_lines()
    lines += [f"# timing {name} = {secs:.3f}s" for name, secs in timings]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _fit_embedding(cfg, sample):
    model = ConditionalEmbedding(bandwidth=cfg.floatval("kernel.sigma"),
                                 regularization=cfg.optional_float("embedding.lambda"))
    return model.fit(sample.x, sample.u, sample.y)


def run_experiment(cfg, out_dir):
    violations = cfg.validate()
    if violations:
        key, _, msg = violations[0].partition(":")
        raise ConfigError(key.strip(), msg.strip())
    os.makedirs(out_dir, exist_ok=True)
    if cfg.experiment == "sweep":
        return run_sweep(cfg, out_dir)

    timings = []
    total0 = time.perf_counter()
    rng = np.random.default_rng(cfg.intval("seed"))
    system = build_system(cfg)
    policy = build_policy(cfg, system)
    spec = build_spec(cfg)

    t0 = time.perf_counter()
    sample = draw_sample(cfg, system, policy, rng)
    timings.append(("sample_s", time.perf_counter() - t0))
    sample.save(os.path.join(out_dir, "sample.csv"))

    t0 = time.perf_counter()
    model = _fit_embedding(cfg, sample)
    timings.append(("fit_s", time.perf_counter() - t0))

    points, counts = eval_points(cfg)
    t0 = time.perf_counter()
    field = compute_field(model, policy, spec, points)
    timings.append(("field_s", time.perf_counter() - t0))

    t0 = time.perf_counter()
    params = BoundParams.from_model(model, cfg.floatval("bound.delta"),
                                    method=cfg.text("bound.ell_method"))
    B = 2.0 * complexity_term(model, points, policy(points)) + params.deviation_term()
    field.attach_bounds(B)
    timings.append(("bound_s", time.perf_counter() - t0))
    field.save(os.path.join(out_dir, "field.csv"))
    _maybe_heatmap(cfg, out_dir, field.values, counts, "field")

    if cfg.boolval("dp.compare") and system.affine_deterministic and min(counts) >= 2:
        t0 = time.perf_counter()
        grid = Grid(cfg.vector("eval.lo"), cfg.vector("eval.hi"), counts)
        reference = dp_solve(grid, system, policy, spec)
        timings.append(("dp_s", time.perf_counter() - t0))
        ref_field = SafetyField(points, reference.ravel())
        ref_field.save(os.path.join(out_dir, "dp.csv"))
        _maybe_heatmap(cfg, out_dir, ref_field.values, counts, "dp")
        stats = compare(field, ref_field)
        with open(os.path.join(out_dir, "errors.txt"), "w", newline="\n") as fh:
            fh.write(f"max_abs = {stats.max_abs!r}\n")
            fh.write(f"mean_abs = {stats.mean_abs!r}\n")

    timings.append(("total_s", time.perf_counter() - total0))
    write_manifest(os.path.join(out_dir, "manifest.txt"), cfg, timings)
    return out_dir


def run_sweep(cfg, out_dir):
    """Mean bound over the evaluation lattice for each (M, delta) pair."""
    timings = []
    total0 = time.perf_counter()
    rng = np.random.default_rng(cfg.intval("seed"))
    system = build_system(cfg)
    policy = build_policy(cfg, system)
    points, _ = eval_points(cfg)
    controls = policy(points)
    sizes = cfg.intlist("sweep.M")
    deltas = cfg.vector("sweep.delta")
    method = cfg.text("bound.ell_method")

    rows = []
    for M in sizes:
        t0 = time.perf_counter()
        sample = sample_iid(system, policy, cfg.vector("sample.init_lo"),
                            cfg.vector("sample.init_hi"), M, rng)
        model = _fit_embedding(cfg, sample)
        comp = complexity_term(model, points, controls)
        ell = model_eigen_lower_bound(model, method=method)
        for delta in deltas:
            params = BoundParams.build(M, model.rho, ell, delta)
            rows.append((M, delta, float(np.mean(2.0 * comp + params.deviation_term()))))
        timings.append((f"sweep_M{M}_s", time.perf_counter() - t0))

    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="\n") as fh:
        fh.write("M,delta,mean_B\n")
        for M, delta, mean_b in rows:
            fh.write(f"{M},{delta!r},{mean_b!r}\n")
    timings.append(("total_s", time.perf_counter() - total0))
    write_manifest(os.path.join(out_dir, "manifest.txt"), cfg, timings)
    return out_dir


def _load_config(args):
    if getattr(args, "config", None):
        cfg = ExperimentConfig.from_file(args.config)
    else:
        cfg = ExperimentConfig({})
    if getattr(args, "seed", None) is not None:
        cfg.values["seed"] = str(args.seed)
    if getattr(args, "controller", None):
        cfg.values["policy.kind"] = "mlp"
        cfg.values["policy.controller"] = args.controller
    return cfg


def _add_run_flags(parser):
    parser.add_argument("--config", help="experiment config file (defaults if omitted)")
    parser.add_argument("--out", help="output directory (default runs/<experiment>)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.add_argument("--controller", help="MLP weights file overriding the policy")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="kreach",
        description="Sample-based safety probabilities with confidence bounds.")
    sub = parser.add_subparsers(dest="verb", required=True)

    run_p = sub.add_parser("run", help="run one experiment end to end")
    _add_run_flags(run_p)

    val_p = sub.add_parser("validate", help="check a config without running it")
    val_p.add_argument("--config", required=True)

    sweep_p = sub.add_parser("sweep", help="mean-bound table over sample sizes and deltas")
    _add_run_flags(sweep_p)

    cmp_p = sub.add_parser("compare", help="error statistics between two field CSVs")
    cmp_p.add_argument("field_a")
    cmp_p.add_argument("field_b")

    args = parser.parse_args(argv)
    try:
        if args.verb == "validate":
            cfg = _load_config(args)
            violations = cfg.validate()
            for line in violations:
                print(line)
            if violations:
                return 1
            print("ok")
            return 0
        if args.verb == "compare":
            stats = compare(SafetyField.load(args.field_a), SafetyField.load(args.field_b))
            print(f"max_abs = {stats.max_abs!r}")
            print(f"mean_abs = {stats.mean_abs!r}")
            return 0
        if args.verb == "sweep" and not args.config:
            cfg = ExperimentConfig({"experiment": "sweep"})
            if args.seed is not None:
                cfg.values["seed"] = str(args.seed)
        else:
            cfg = _load_config(args)
        if args.verb == "sweep":
            cfg.values["experiment"] = "sweep"
        out_dir = args.out or os.path.join("runs", cfg.experiment)
        run_experiment(cfg, out_dir)
        print(out_dir)
        return 0
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
