import numpy as np
import pytest

from kreach import (
    Box,
    ConstantPolicy,
    DimensionError,
    Everything,
    Grid,
    IntegratorChain,
    ParameterError,
    Pendulum4D,
    SafetySpec,
    UnsupportedConfigurationError,
    compare,
    dp_solve,
    monte_carlo,
)

import oracles


def _integrator_setup():
    system = IntegratorChain(dim=2, T=0.25, cov=0.01)
    policy = ConstantPolicy(0.0, m=1)
    spec = SafetySpec(
        safe=Box([-1.0, -1.0], [1.0, 1.0]),
        target=Box([-1.0, -1.0], [1.0, 1.0]),
        horizon=5,
        variant="terminal-hitting",
    )
    return system, policy, spec


def test_grid_points_and_shape():
    g = Grid([-1.0, -1.0], [1.0, 1.0], [3, 5])
    assert g.shape == (3, 5)
    pts = g.points()
    assert pts.shape == (15, 2)
    np.testing.assert_array_equal(np.unique(pts[:, 0]), [-1.0, 0.0, 1.0])
    np.testing.assert_array_equal(np.unique(pts[:, 1]), [-1.0, -0.5, 0.0, 0.5, 1.0])


def test_grid_interpolation_exact_at_nodes():
    g = Grid([-1.0, -1.0], [1.0, 1.0], [9, 9])
    rng = np.random.default_rng(0)
    values = rng.uniform(size=g.shape)
    got = g.interpolate(values, g.points())
    np.testing.assert_allclose(got, values.ravel(), atol=1e-12)


def test_grid_interpolation_zero_outside():
    g = Grid([-1.0, -1.0], [1.0, 1.0], [9, 9])
    values = np.ones(g.shape)
    out = g.interpolate(values, np.array([[1.5, 0.0], [0.0, -1.2]]))
    np.testing.assert_array_equal(out, [0.0, 0.0])


def test_grid_interpolation_midpoint_average():
    g = Grid([0.0], [1.0], [2])
    values = np.array([0.0, 1.0])
    got = g.interpolate(values, np.array([[0.5]]))
    np.testing.assert_allclose(got, [0.5], atol=1e-12)


def test_one_step_dp_matches_gaussian_mass_exactly():
    # horizon 1, K = T: the recursion integrates the indicator of the union
    # of cells whose node lies in T, which is the box widened by half a cell
    system, policy, spec1 = _integrator_setup()
    spec1 = SafetySpec(spec1.safe, spec1.target, horizon=1, variant="terminal-hitting")
    grid = Grid([-1.1, -1.1], [1.1, 1.1], [23, 23])  # nodes at multiples of 0.1
    values = dp_solve(grid, system, policy, spec1)
    pts = grid.points()
    h = 2.2 / 22
    inside = oracles.in_box(pts, -1.0, 1.0)
    succ = oracles.integrator_step(pts, np.zeros(len(pts)), 0.0)
    want = np.array(
        [
            oracles.gaussian_box_mass(
                s, 0.1, [-1.0 - h / 2, -1.0 - h / 2], [1.0 + h / 2, 1.0 + h / 2]
            )
            for s in succ
        ]
    )
    want *= inside
    np.testing.assert_allclose(values.ravel(), want, atol=1e-10)


def test_one_step_dp_refinement_approaches_true_mass():
    # against the exact one-step box mass on the unwidened box the
    # discretization error shrinks with refine
    system, policy, _ = _integrator_setup()
    spec1 = SafetySpec(
        Box([-1.0, -1.0], [1.0, 1.0]), Box([-1.0, -1.0], [1.0, 1.0]), 1,
        "terminal-hitting",
    )
    grid = Grid([-1.1, -1.1], [1.1, 1.1], [23, 23])
    pts = grid.points()
    succ = oracles.integrator_step(pts, np.zeros(len(pts)), 0.0)
    truth = np.array(
        [oracles.gaussian_box_mass(s, 0.1, [-1.0, -1.0], [1.0, 1.0]) for s in succ]
    )
    truth *= oracles.in_box(pts, -1.0, 1.0)
    errs = []
    for r in (1, 4, 8):
        vals = dp_solve(grid, system, policy, spec1, refine=r)
        errs.append(np.max(np.abs(vals.ravel() - truth)))
    assert errs[2] < errs[1] < errs[0]
    # error is linear in the fine spacing; refine=8 puts the half-cell
    # boundary offset at 0.00625, worth about 0.03 at the cliff
    assert errs[2] <= 0.04


def test_dp_refined_matches_monte_carlo_terminal():
    system, policy, spec = _integrator_setup()
    grid = Grid([-1.1, -1.1], [1.1, 1.1], [41, 41])  # probes land on nodes
    values = dp_solve(grid, system, policy, spec, refine=4)
    probes = np.array(
        [[a, b] for a in (-0.55, 0.0, 0.55) for b in (-0.55, 0.0, 0.55)]
    )
    dp_at = grid.interpolate(values, probes)
    rng = np.random.default_rng(11)
    mc = np.array(
        [monte_carlo(system, policy, spec, p, 10000, rng) for p in probes]
    )
    assert np.max(np.abs(dp_at - mc)) <= 0.02


def test_dp_refined_matches_monte_carlo_first_hitting():
    system, policy, _ = _integrator_setup()
    spec = SafetySpec(
        safe=Box([-1.0, -1.0], [1.0, 1.0]),
        target=Box([-0.4, -0.4], [0.4, 0.4]),
        horizon=5,
        variant="first-hitting",
    )
    grid = Grid([-1.1, -1.1], [1.1, 1.1], [41, 41])
    values = dp_solve(grid, system, policy, spec, refine=4)
    probes = np.array([[0.0, 0.0], [0.55, -0.55], [-0.88, 0.22]])
    dp_at = grid.interpolate(values, probes)
    rng = np.random.default_rng(12)
    mc = np.array(
        [monte_carlo(system, policy, spec, p, 20000, rng) for p in probes]
    )
    assert np.max(np.abs(dp_at - mc)) <= 0.03


def test_dp_monotone_in_horizon_when_target_equals_safe():
    # staying safe for N+1 steps is harder than for N
    system, policy, _ = _integrator_setup()
    grid = Grid([-1.0, -1.0], [1.0, 1.0], [9, 9])
    prev = None
    for N in (1, 2, 3, 4):
        spec = SafetySpec(
            Box([-1.0, -1.0], [1.0, 1.0]), Box([-1.0, -1.0], [1.0, 1.0]), N,
            "terminal-hitting",
        )
        vals = dp_solve(grid, system, policy, spec)
        assert np.all(vals >= -1e-12) and np.all(vals <= 1 + 1e-12)
        if prev is not None:
            assert np.all(vals <= prev + 1e-12)
        prev = vals


def test_dp_first_hitting_is_one_on_target():
    system, policy, _ = _integrator_setup()
    spec = SafetySpec(
        Box([-1.0, -1.0], [1.0, 1.0]), Box([-0.4, -0.4], [0.4, 0.4]), 3,
        "first-hitting",
    )
    grid = Grid([-1.0, -1.0], [1.0, 1.0], [11, 11])
    vals = dp_solve(grid, system, policy, spec)
    on_target = spec.target.contains(grid.points()).reshape(grid.shape)
    np.testing.assert_array_equal(vals[on_target], 1.0)


def test_dp_rejects_unbounded_sets():
    system, policy, _ = _integrator_setup()
    spec = SafetySpec(Everything(), Box([-1.0, -1.0], [1.0, 1.0]), 2,
                      "terminal-hitting")
    grid = Grid([-1.0, -1.0], [1.0, 1.0], [5, 5])
    with pytest.raises(ParameterError):
        dp_solve(grid, system, policy, spec)


def test_dp_rejects_nonaffine_system():
    system = Pendulum4D(T=0.1, cov=0.01)
    policy = ConstantPolicy(0.0, m=1)
    spec = SafetySpec(
        Box([-1.0] * 4, [1.0] * 4), Box([-1.0] * 4, [1.0] * 4), 2,
        "terminal-hitting",
    )
    grid = Grid([-1.0] * 4, [1.0] * 4, [3, 3, 3, 3])
    with pytest.raises(UnsupportedConfigurationError):
        dp_solve(grid, system, policy, spec)


def test_dp_rejects_bad_refine():
    system, policy, spec = _integrator_setup()
    grid = Grid([-1.0, -1.0], [1.0, 1.0], [5, 5])
    with pytest.raises(ParameterError):
        dp_solve(grid, system, policy, spec, refine=0)


def test_dp_refine_subsamples_fine_grid():
    system, policy, spec = _integrator_setup()
    grid = Grid([-1.1, -1.1], [1.1, 1.1], [6, 6])
    coarse_of_fine = dp_solve(grid, system, policy, spec, refine=3)
    fine = Grid([-1.1, -1.1], [1.1, 1.1], [16, 16])
    full = dp_solve(fine, system, policy, spec)
    np.testing.assert_allclose(coarse_of_fine, full[::3, ::3], atol=1e-12)


def test_monte_carlo_deterministic_per_seed():
    system, policy, spec = _integrator_setup()
    a = monte_carlo(system, policy, spec, np.zeros(2), 2000,
                    np.random.default_rng(5))
    b = monte_carlo(system, policy, spec, np.zeros(2), 2000,
                    np.random.default_rng(5))
    assert a == b


def test_monte_carlo_terminal_matches_oracle():
    system, policy, spec = _integrator_setup()
    got = monte_carlo(system, policy, spec, np.zeros(2), 10000,
                      np.random.default_rng(0))
    want = oracles.mc_terminal([0.0, 0.0], 5, 200000, seed=1)
    assert abs(got - want) <= 0.01


def test_monte_carlo_first_hitting_matches_oracle():
    system, policy, _ = _integrator_setup()
    spec = SafetySpec(
        Box([-1.0, -1.0], [1.0, 1.0]), Box([0.5, 0.5], [0.6, 0.6]), 5,
        "first-hitting",
    )
    got = monte_carlo(system, policy, spec, np.array([0.4, 0.4]), 20000,
                      np.random.default_rng(0))
    want = oracles.mc_first_hit(
        [0.4, 0.4], 5, 200000, seed=1, k_lo=-1.0, k_hi=1.0,
        t_lo=[0.5, 0.5], t_hi=[0.6, 0.6],
    )
    assert abs(got - want) <= 0.01


def test_monte_carlo_on_target_first_hitting_is_one():
    system, policy, _ = _integrator_setup()
    spec = SafetySpec(
        Box([-1.0, -1.0], [1.0, 1.0]), Box([-0.4, -0.4], [0.4, 0.4]), 5,
        "first-hitting",
    )
    got = monte_carlo(system, policy, spec, np.zeros(2), 50,
                      np.random.default_rng(0))
    assert got == 1.0


def test_compare_statistics():
    a = np.array([0.0, 1.0, 0.5])
    b = np.array([0.1, 0.8, 0.5])
    stats = compare(a, b)
    np.testing.assert_allclose(stats.max_abs, 0.2, atol=1e-15)
    np.testing.assert_allclose(stats.mean_abs, 0.1, atol=1e-15)


def test_compare_shape_mismatch():
    with pytest.raises(DimensionError):
        compare(np.zeros(3), np.zeros(4))
