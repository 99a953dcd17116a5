import numpy as np
import pytest

from kreach import (
    Box,
    ConditionalEmbedding,
    EmptySet,
    Everything,
    FIRST,
    ParameterError,
    Predicate,
    SafetyField,
    SafetySpec,
    StochasticReachability,
    TERMINAL,
    compute_field,
    first_hitting,
    indicator,
    terminal_hitting,
)

import oracles


def _model(rng, M=40):
    x = rng.uniform(-1, 1, size=(M, 2))
    u = np.zeros((M, 1))
    y = x + 0.05 * rng.normal(size=(M, 2))
    return ConditionalEmbedding(bandwidth=0.3).fit(x, u, y)


def _zero(points):
    return np.zeros((len(points), 1))


def test_box_contains_closed_boundaries():
    box = Box([-1.0, -1.0], [1.0, 1.0])
    pts = np.array([[1.0, 1.0], [-1.0, 1.0], [1.0000001, 0.0], [0.0, 0.0]])
    np.testing.assert_array_equal(box.contains(pts), [True, True, False, True])


def test_box_dims_subset():
    # constrain only the third coordinate
    box = Box([-0.05], [0.05], dims=[2])
    pts = np.array([[9.0, -9.0, 0.0, 3.0], [0.0, 0.0, 0.06, 0.0]])
    np.testing.assert_array_equal(box.contains(pts), [True, False])


def test_box_requires_lo_le_hi():
    with pytest.raises(ParameterError):
        Box([1.0], [0.0])


def test_everything_and_empty():
    pts = np.array([[1e9, -1e9], [0.0, 0.0]])
    assert Everything().contains(pts).all()
    assert not EmptySet().contains(pts).any()


def test_predicate_region():
    ring = Predicate(lambda p: np.linalg.norm(p, axis=1) <= 1.0, name="unit-ball")
    pts = np.array([[0.5, 0.5], [1.0, 1.0]])
    np.testing.assert_array_equal(ring.contains(pts), [True, False])


def test_indicator_is_float():
    vals = indicator(Box([0.0], [1.0]), np.array([[0.5], [2.0]]))
    assert vals.dtype == float
    np.testing.assert_array_equal(vals, [1.0, 0.0])


def test_one_step_recursion_matches_hand_rollup():
    # N=1 terminal-hitting: V(x) = 1_K(x) * sum_i beta_i(x, pi(x)) 1_T(y_i)
    rng = np.random.default_rng(0)
    model = _model(rng, M=25)
    safe = Box([-1.0, -1.0], [1.0, 1.0])
    target = Box([-0.5, -0.5], [0.5, 0.5])
    spec = SafetySpec(safe=safe, target=target, horizon=1, variant=TERMINAL)
    pts = rng.uniform(-1.2, 1.2, size=(10, 2))
    field = compute_field(model, _zero, spec, pts)
    beta = model.transform(pts, _zero(pts))
    labels = indicator(target, model.y_)
    want = indicator(safe, pts) * np.clip(beta @ labels, 0.0, 1.0)
    np.testing.assert_allclose(field.values, want, atol=1e-12)


def test_two_step_recursion_matches_hand_rollup():
    rng = np.random.default_rng(1)
    model = _model(rng, M=25)
    safe = Box([-1.0, -1.0], [1.0, 1.0])
    target = Box([-0.5, -0.5], [0.5, 0.5])
    spec = SafetySpec(safe=safe, target=target, horizon=2, variant=TERMINAL)
    pts = rng.uniform(-1.2, 1.2, size=(6, 2))
    field = compute_field(model, _zero, spec, pts)
    labels = indicator(target, model.y_)
    beta_y = model.transform(model.y_, _zero(model.y_))
    stage = indicator(safe, model.y_) * np.clip(beta_y @ labels, 0.0, 1.0)
    beta_q = model.transform(pts, _zero(pts))
    want = indicator(safe, pts) * np.clip(beta_q @ stage, 0.0, 1.0)
    np.testing.assert_allclose(field.values, want, atol=1e-12)


def test_first_hitting_is_one_on_target():
    rng = np.random.default_rng(2)
    model = _model(rng)
    spec = SafetySpec(
        safe=Box([-1.0, -1.0], [1.0, 1.0]),
        target=Box([-0.5, -0.5], [0.5, 0.5]),
        horizon=4,
        variant=FIRST,
    )
    pts = np.array([[0.0, 0.0], [0.4, -0.4], [0.5, 0.5]])
    field = compute_field(model, _zero, spec, pts)
    assert np.array_equal(field.values, np.ones(3))


def test_values_always_in_unit_interval():
    rng = np.random.default_rng(3)
    for trial in range(5):
        model = _model(rng, M=30)
        for variant in (TERMINAL, FIRST):
            spec = SafetySpec(
                safe=Box([-0.8, -0.8], [0.8, 0.8]),
                target=Box([-0.3, -0.3], [0.3, 0.3]),
                horizon=3,
                variant=variant,
            )
            pts = rng.uniform(-1, 1, size=(20, 2))
            vals = compute_field(model, _zero, spec, pts).values
            assert np.all(vals >= 0.0) and np.all(vals <= 1.0)


def test_outside_safe_set_is_zero():
    rng = np.random.default_rng(4)
    model = _model(rng)
    spec = SafetySpec(
        safe=Box([-1.0, -1.0], [1.0, 1.0]),
        target=Box([-1.0, -1.0], [1.0, 1.0]),
        horizon=3,
        variant=TERMINAL,
    )
    pts = np.array([[1.5, 0.0], [0.0, -2.0]])
    assert np.array_equal(compute_field(model, _zero, spec, pts).values, np.zeros(2))


def test_variant_specific_entry_points():
    rng = np.random.default_rng(5)
    model = _model(rng)
    safe = Box([-1.0, -1.0], [1.0, 1.0])
    target = Box([-0.5, -0.5], [0.5, 0.5])
    pts = rng.uniform(-1, 1, size=(4, 2))
    t_spec = SafetySpec(safe=safe, target=target, horizon=2, variant=TERMINAL)
    f_spec = SafetySpec(safe=safe, target=target, horizon=2, variant=FIRST)
    np.testing.assert_array_equal(
        terminal_hitting(model, _zero, t_spec, pts).values,
        compute_field(model, _zero, t_spec, pts).values,
    )
    np.testing.assert_array_equal(
        first_hitting(model, _zero, f_spec, pts).values,
        compute_field(model, _zero, f_spec, pts).values,
    )
    with pytest.raises(ParameterError):
        terminal_hitting(model, _zero, f_spec, pts)
    with pytest.raises(ParameterError):
        first_hitting(model, _zero, t_spec, pts)


def test_spec_validation():
    box = Box([0.0], [1.0])
    with pytest.raises(ParameterError):
        SafetySpec(safe=box, target=box, horizon=0, variant=TERMINAL)
    with pytest.raises(ParameterError):
        SafetySpec(safe=box, target=box, horizon=2, variant="sometime")


def test_estimator_matches_functional_path():
    rng = np.random.default_rng(6)
    M = 30
    x = rng.uniform(-1, 1, size=(M, 2))
    u = np.zeros((M, 1))
    y = x + 0.05 * rng.normal(size=(M, 2))
    safe = Box([-1.0, -1.0], [1.0, 1.0])
    target = Box([-0.5, -0.5], [0.5, 0.5])
    est = StochasticReachability(
        safe=safe, target=target, horizon=3, variant=TERMINAL, bandwidth=0.3
    ).fit(x, u, y)
    pts = rng.uniform(-1, 1, size=(8, 2))
    spec = SafetySpec(safe=safe, target=target, horizon=3, variant=TERMINAL)
    want = compute_field(est.embedding_, _zero, spec, pts).values
    np.testing.assert_allclose(est.predict(pts), want, atol=1e-12)


def test_estimator_field_bounds_when_delta_set():
    rng = np.random.default_rng(7)
    M = 30
    x = rng.uniform(-1, 1, size=(M, 2))
    u = np.zeros((M, 1))
    y = x + 0.05 * rng.normal(size=(M, 2))
    est = StochasticReachability(
        safe=Box([-1.0, -1.0], [1.0, 1.0]),
        target=Box([-0.5, -0.5], [0.5, 0.5]),
        horizon=2,
        variant=TERMINAL,
        bandwidth=0.3,
        delta=0.5,
    ).fit(x, u, y)
    field = est.predict_field(rng.uniform(-1, 1, size=(5, 2)))
    assert field.bounds is not None
    assert np.all(field.bounds >= 0.0)
    assert np.all(field.lo >= 0.0) and np.all(field.hi <= 1.0)
    assert np.all(field.lo <= field.values) and np.all(field.values <= field.hi)


def test_estimator_sklearn_clone_params():
    est = StochasticReachability(
        safe=Box([0.0], [1.0]), target=Box([0.0], [1.0]), horizon=2
    )
    params = est.get_params()
    clone = StochasticReachability(**params)
    assert clone.get_params() == params


def test_field_round_trip(tmp_path):
    pts = np.array([[0.0, 0.0], [0.5, -0.5]])
    field = SafetyField(pts, np.array([0.25, 0.75]))
    field.attach_bounds(np.array([0.1, 0.5]))
    path = tmp_path / "field.csv"
    field.save(path)
    loaded = SafetyField.load(path)
    assert np.array_equal(loaded.points, pts)
    assert np.array_equal(loaded.values, field.values)
    assert np.array_equal(loaded.bounds, field.bounds)
    np.testing.assert_allclose(loaded.lo, [0.15, 0.25])
    np.testing.assert_allclose(loaded.hi, [0.35, 1.0])


def test_field_header(tmp_path):
    field = SafetyField(np.zeros((1, 3)), np.array([1.0]))
    path = tmp_path / "f.csv"
    field.save(path)
    assert path.read_text().splitlines()[0] == "x_1,x_2,x_3,value,bound,lo,hi"


def test_field_without_bounds_round_trip(tmp_path):
    field = SafetyField(np.array([[0.1], [0.2]]), np.array([0.5, 0.6]))
    path = tmp_path / "nb.csv"
    field.save(path)
    loaded = SafetyField.load(path)
    assert loaded.bounds is None
    assert np.array_equal(loaded.values, field.values)


def test_attach_bounds_rejects_negative():
    field = SafetyField(np.zeros((2, 2)), np.array([0.5, 0.5]))
    with pytest.raises(ParameterError):
        field.attach_bounds(np.array([0.1, -0.1]))


def test_recursion_tracks_near_deterministic_lattice():
    # lattice-preserving shift map with near-zero noise: the embedding
    # recursion should agree with an exact nearest-node value recursion
    rng = np.random.default_rng(11)
    ax = np.linspace(-1.0, 1.0, 21)
    h = ax[1] - ax[0]
    mesh = np.meshgrid(ax, ax, indexing="ij")
    X = np.column_stack([m.ravel() for m in mesh])

    def shift(points):
        return points - h * np.sign(points)

    Y = shift(X) + 1e-4 * rng.normal(size=X.shape)
    U = np.zeros((len(X), 1))
    model = ConditionalEmbedding(bandwidth=0.05, regularization=1e-8).fit(X, U, Y)
    # set edges fall strictly between lattice coordinates
    safe = Box([-0.95, -0.95], [0.95, 0.95])
    target = Box([-0.35, -0.35], [0.35, 0.35])
    horizon = 3
    want, clean = oracles.snap_recursion(
        [ax, ax],
        shift,
        lambda p: safe.contains(p),
        lambda p: target.contains(p),
        horizon,
        margin=0.02,
    )
    spec = SafetySpec(safe=safe, target=target, horizon=horizon, variant=TERMINAL)
    got = compute_field(model, _zero, spec, X).values
    assert clean.sum() > 300
    np.testing.assert_allclose(got[clean], want[clean], atol=0.05)
