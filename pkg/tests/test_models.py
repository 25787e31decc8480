import numpy as np
import pytest
from hypothesis import given, strategies as st

from delaysim.models import (
    InitialSegment,
    ModelSpec,
    build_initial,
    build_model,
    cubic_delay_model,
    power_delay_jump_model,
    validate_conditions,
)
from delaysim.time_grid import make_grid

finite = st.floats(-50, 50, allow_nan=False)


def v(*xs):
    return np.array([[x] for x in xs], dtype=float)


def test_cubic_drift_and_diffusion():
    m = cubic_delay_model(1, 1, 1)
    np.testing.assert_array_equal(m.drift(v(2), v(1)), v(3))
    assert m.diffusion(v(2), v(3)).shape == (1, 1, 1)
    assert m.diffusion(v(2), v(3))[0, 0, 0] == 9
    assert (m.n, m.m, m.kind) == (1, 1, "brownian")


def test_cubic_delay_moduli():
    m = cubic_delay_model(0.0, -2.0, 0.5)
    x, y = v(1.5, -2.0), v(0.5, 3.0)
    np.testing.assert_allclose(m.V1(x, y), 1.5 * 2.0 * (x[:, 0] ** 2 + y[:, 0] ** 2))
    np.testing.assert_allclose(m.V2(x, y), 0.5 * (abs(x[:, 0]) + abs(y[:, 0])))
    assert (m.L1, m.L2, m.K1, m.K2, m.q1, m.q2) == (0.0, 0.0, 3.0, 0.5, 2.0, 2.0)


def test_zero_cubic_model():
    m = cubic_delay_model(0, 0, 0)
    x = np.random.default_rng(0).standard_normal((10, 1))
    assert not np.any(m.drift(x, x[::-1]))
    assert not np.any(m.diffusion(x, x[::-1]))


def test_power_jump_gain():
    m = power_delay_jump_model(1, 2)
    assert m.jump_gain(v(0), v(3))[0, 0] == 9
    assert (m.m, m.kind) == (0, "jump")
    z = power_delay_jump_model(0, 2)
    x = np.random.default_rng(0).standard_normal((10, 1))
    assert not np.any(z.jump_gain(x, x))


def test_non_integer_power_is_odd():
    m = power_delay_jump_model(1.0, 1.5)
    np.testing.assert_allclose(m.jump_gain(v(0, 0), v(4, -4))[:, 0], [8, -8])


def test_mean_value_bound_on_random_pairs():
    rng = np.random.default_rng(3)
    y1, y2 = rng.normal(0, 3, (2, 10_000))
    lhs = np.abs(y1**2 - y2**2)
    rhs = 2 * np.maximum(abs(y1), abs(y2)) * np.abs(y1 - y2)
    assert np.all(lhs <= rhs * (1 + 1e-12))
    m = power_delay_jump_model(1.0, 2.0)
    np.testing.assert_allclose(m.V3(y1[:, None], y2[:, None]), 2 * np.maximum(abs(y1), abs(y2)))


@given(finite, finite, finite, finite)
def test_coefficients_are_pure(x1, y1, a, b):
    m = cubic_delay_model(a, b, 0.3)
    first = (m.drift(v(x1), v(y1)), m.diffusion(v(x1), v(y1)))
    second = (m.drift(v(x1), v(y1)), m.diffusion(v(x1), v(y1)))
    np.testing.assert_array_equal(first[0], second[0])
    np.testing.assert_array_equal(first[1], second[1])


def test_modelspec_invariants():
    f = cubic_delay_model(1, 1, 1)
    with pytest.raises(ValueError):
        ModelSpec("x", 1, 1, f.drift)
    with pytest.raises(ValueError):
        ModelSpec("x", 1, 1, f.drift, diffusion=f.diffusion, jump_gain=f.drift)
    with pytest.raises(ValueError):
        ModelSpec("x", 1, 1, f.drift, diffusion=f.diffusion, L1=-1)
    with pytest.raises(ValueError):
        ModelSpec("x", 1, 1, f.drift, diffusion=f.diffusion, q1=0.5)
    with pytest.raises(ValueError):
        ModelSpec("x", 1, 1, f.drift, jump_gain=f.drift)
    with pytest.raises(ValueError):
        power_delay_jump_model(1, 0.5)


def test_initial_segments():
    grid = make_grid(1, 2, 4)
    np.testing.assert_array_equal(InitialSegment.constant(0.5).on_grid(grid), np.full((5, 1), 0.5))
    aff = InitialSegment.affine(1.0, 2.0, tau=1.0)
    np.testing.assert_allclose(aff.on_grid(grid)[:, 0], 1 + 2 * grid.history_times())
    assert aff.bound == 1.0
    assert build_initial({"kind": "affine", "value": 0.0, "slope": 1.0}, 1.0).bound == 1.0
    with pytest.raises(ValueError):
        build_initial({"kind": "spline"}, 1.0)
    lying = InitialSegment(lambda t: np.array([5.0]), 1, 1.0)
    with pytest.raises(ValueError):
        lying.on_grid(grid)


def test_build_model_lookup():
    assert build_model("cubic_delay", {"a": -1, "b": 0.1, "c": 0.1}).params["a"] == -1
    assert build_model("power_delay_jump", {"theta": 0.5, "q": 2}).kind == "jump"
    with pytest.raises(ValueError):
        build_model("nonesuch")
    with pytest.raises(TypeError):
        build_model("cubic_delay", {"a": 1})


def test_declared_moduli_pass_validation():
    rep = validate_conditions(cubic_delay_model(1, 1, 1), trials=10_000)
    assert rep.passed, rep.to_dict()
    assert rep["A1"].max_ratio <= 1 + 1e-12 and rep["A2"].max_ratio <= 1 + 1e-12


def test_missing_delay_modulus_fails():
    rep = validate_conditions(build_model("cubic_delay", {"a": 1, "b": 1, "c": 1, "v1_scale": 0.0}))
    assert not rep.passed
    assert rep["A1"].max_ratio > 1


def test_zero_model_ratios_vanish():
    rep = validate_conditions(build_model("zero"))
    assert rep.passed
    assert all(c.max_ratio == 0 for c in rep.checks)


@pytest.mark.parametrize("seed", range(25))
def test_near_equality_survives_rounding(seed):
    # same-sign pairs make the diffusion condition an equality, so cancellation
    # in sigma(y1) - sigma(y2) must not register as a violation
    assert validate_conditions(cubic_delay_model(-1, 0.1, 0.1), trials=10_000, seed=seed).passed


def test_jump_model_validation():
    assert validate_conditions(power_delay_jump_model(0.5, 2)).passed
    assert validate_conditions(power_delay_jump_model(0.5, 3.5, a=-1)).passed
    broken = build_model("power_delay_jump", {"theta": 0.5, "q": 2, "v3_scale": 0.5})
    rep = validate_conditions(broken)
    assert not rep.passed and rep["A4"].max_ratio > 1


def test_report_serialisation():
    d = validate_conditions(cubic_delay_model(1, 1, 1), trials=100).to_dict()
    assert d["passed"] and {c["name"] for c in d["checks"]} >= {"A1", "A2"}
    with pytest.raises(KeyError):
        validate_conditions(cubic_delay_model(1, 1, 1), trials=10)["A4"]
