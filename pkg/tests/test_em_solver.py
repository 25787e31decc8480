from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaysim.convergence import fit_order
from delaysim.drivers import (
    BrownianDriver,
    JumpDriver,
    JumpRealization,
    MarkDistribution,
    bin_marks,
    sample_brownian,
    sample_brownian_paths,
    sample_jumps,
)
from delaysim.em_solver import (
    DivergenceError,
    em_brownian,
    em_jump,
    increment_moments,
    simulate_paths,
)
from delaysim.models import InitialSegment, build_model, cubic_delay_model, power_delay_jump_model
from delaysim.time_grid import make_grid

HALF = InitialSegment.constant(0.5)
ONE = InitialSegment.constant(1.0)


def test_zero_model_is_constant():
    grid = make_grid(1, 2, 8)
    path = em_brownian(build_model("zero"), HALF, grid, sample_brownian(grid, 1, 0, 0))
    np.testing.assert_array_equal(path.values, np.full((grid.M + 1, 1), 0.5))


def test_linear_decay_matches_recursion():
    grid = make_grid(1, 2, 4)
    path = em_brownian(cubic_delay_model(-1, 0, 0), HALF, grid, sample_brownian(grid, 1, 0, 0))
    exact = Fraction(1, 2) * Fraction(3, 4) ** 8
    assert exact == Fraction(0.05005645751953125)
    assert path.values[-1, 0] == float(exact)


def test_single_brownian_step():
    grid = make_grid(1, 2, 4)
    noise = sample_brownian(grid, 1, 9, 0)
    path = em_brownian(cubic_delay_model(0, 0, 1), ONE, grid, noise)
    assert path.values[1, 0] == 1 + noise.increments[0, 0]


def test_delayed_argument_is_used():
    # dX = X(t - tau) dt with xi = 1 gives Y_k = 1 + k dt on the first delay interval
    m = cubic_delay_model(0, 0, 0)
    lin = type(m)(name="lag", n=1, m=1, drift=lambda x, y: y, diffusion=m.diffusion)
    grid = make_grid(1, 2, 4)
    path = em_brownian(lin, ONE, grid, sample_brownian(grid, 1, 0, 0))
    np.testing.assert_allclose(path.values[:5, 0], 1 + 0.25 * np.arange(5))
    # second interval integrates the first one: Y_5 = Y_4 + Y_0 dt
    assert path.values[5, 0] == pytest.approx(path.values[4, 0] + 0.25 * path.values[0, 0])


def test_full_path_includes_history_once():
    grid = make_grid(1, 2, 4)
    path = em_brownian(cubic_delay_model(-1, 0, 0), HALF, grid, sample_brownian(grid, 1, 0, 0))
    t, y = path.full()
    assert t.size == grid.N + grid.M + 1 and y.shape == (t.size, 1)
    assert t[0] == -1 and t[-1] == 2 and np.all(np.diff(t) > 0)


def _jr(times, marks, intensity, mark_mean):
    return JumpRealization(np.asarray(times, float), np.asarray(marks, float), intensity, mark_mean, 2.0)


def test_jump_step_compensator_only():
    grid = make_grid(1, 2, 4)
    m = power_delay_jump_model(0.5, 2)
    path = em_jump(m, ONE, grid, _jr([], [], 1.0, 0.5))
    y = path.values[:, 0]
    hist = np.ones(grid.N + 1)
    for k in range(grid.M):
        delayed = hist[k] if k < grid.N else y[k - grid.N]
        assert y[k + 1] == pytest.approx(y[k] - 0.5 * delayed**2 * 0.5 * 0.25, abs=1e-15)


def test_zero_gain_is_deterministic_euler():
    grid = make_grid(1, 2, 4)
    m = power_delay_jump_model(0.0, 2, a=-1)
    jr = sample_jumps(grid, 3.0, MarkDistribution.uniform(), 0, 0)
    path = em_jump(m, HALF, grid, jr)
    assert path.values[-1, 0] == pytest.approx(0.5 * 0.75**8, abs=1e-15)


def test_single_jump_step():
    grid = make_grid(1, 2, 4)
    # intensity * mark_mean * dt = 0.4 * 1 * 0.25 = 0.1
    path = em_jump(power_delay_jump_model(1, 2), ONE, grid, _jr([0.1], [0.5], 0.4, 1.0))
    assert path.values[1, 0] == pytest.approx(1.4, abs=1e-15)


def test_exact_and_binned_jump_schemes_agree():
    grid = make_grid(1, 2, 16)
    m = power_delay_jump_model(0.5, 2, a=-0.5)
    marks = MarkDistribution.uniform()
    for path in range(10):
        jr = sample_jumps(grid, 2.0, marks, 3, path)
        exact = em_jump(m, ONE, grid, jr)
        stacked = simulate_paths(m, ONE, grid, JumpDriver(2.0, marks).sample(grid, 3, [path]))
        np.testing.assert_allclose(stacked.values[0], exact.values, rtol=1e-12, atol=1e-14)


def test_divergence_is_reported_with_step():
    grid = make_grid(1, 4, 2)
    blowup = cubic_delay_model(0, 1e3, 0)
    big = InitialSegment.constant(1e30)
    with pytest.raises(DivergenceError) as info:
        em_brownian(blowup, big, grid, sample_brownian(grid, 1, 0, 0))
    assert info.value.step >= 1
    batch = simulate_paths(blowup, big, grid, sample_brownian_paths(grid, 1, 0, [0, 1]))
    assert np.all(batch.divergent) and np.all(batch.divergent_step >= 1)
    with pytest.raises(DivergenceError):
        batch.path(0)


def test_noise_must_match():
    grid = make_grid(1, 2, 4)
    with pytest.raises(ValueError):
        simulate_paths(cubic_delay_model(1, 1, 1), ONE, grid, sample_brownian(make_grid(1, 2, 8), 1, 0, 0))
    with pytest.raises(ValueError):
        simulate_paths(power_delay_jump_model(1, 2), ONE, grid, sample_brownian(grid, 1, 0, 0))
    with pytest.raises(ValueError):
        simulate_paths(cubic_delay_model(1, 1, 1), ONE, grid, sample_brownian(grid, 2, 0, 0))


def test_bitwise_determinism():
    grid = make_grid(1, 2, 32)
    m = cubic_delay_model(-1, 0.1, 0.5)
    a = simulate_paths(m, HALF, grid, sample_brownian_paths(grid, 1, 4, range(8)))
    b = simulate_paths(m, HALF, grid, sample_brownian_paths(grid, 1, 4, range(8)))
    np.testing.assert_array_equal(a.values, b.values)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 1000), min_size=2, max_size=6, unique=True))
def test_paths_do_not_interact(paths):
    grid = make_grid(1, 2, 16)
    m = cubic_delay_model(-1, 0.1, 0.5)
    stack = simulate_paths(m, HALF, grid, sample_brownian_paths(grid, 1, 1, paths))
    alone = simulate_paths(m, HALF, grid, sample_brownian_paths(grid, 1, 1, paths[:1]))
    np.testing.assert_array_equal(stack.values[0], alone.values[0])


def test_coupled_levels_agree_at_zero_and_converge():
    fine = make_grid(1, 2, 256)
    m = cubic_delay_model(-1, 0.1, 0.5)
    noise = sample_brownian_paths(fine, 1, 21, range(400))
    ref = simulate_paths(m, HALF, fine, noise)
    errs, ses = [], []
    for factor in (32, 16, 8, 4):
        coarse = simulate_paths(m, HALF, fine.coarsen(factor), noise.aggregate(factor))
        np.testing.assert_array_equal(coarse.values[:, 0], ref.values[:, 0])
        d2 = np.max((ref.values[:, ::factor, 0] - coarse.values[:, :, 0]) ** 2, axis=1)
        errs.append(d2.mean())
        ses.append(d2.std(ddof=1) / np.sqrt(d2.size))
    for e0, e1, s0, s1 in zip(errs, errs[1:], ses, ses[1:]):
        assert e1 <= e0 + 2 * np.hypot(s0, s1)


def test_increments_of_zero_model_vanish():
    grid = make_grid(1, 2, 16)
    ests = increment_moments(build_model("zero"), HALF, grid, BrownianDriver(1), [2, 4], paths=40)
    assert all(e.moment == 0 and e.divergent == 0 for e in ests)


def test_increment_slope_brownian_p2():
    m = cubic_delay_model(-1, 0.1, 1.0)
    rows = []
    for n in (16, 32, 64, 128):
        e = increment_moments(m, ONE, make_grid(1, 2, n), BrownianDriver(1), 2, paths=4000, seed=2)
        rows.append((e.dt, e.moment, e.stderr))
    slope, _ = fit_order(rows)
    assert 0.8 <= slope <= 1.2


def test_increment_estimators_and_validation():
    grid = make_grid(1, 2, 16)
    m = cubic_delay_model(-1, 0.1, 1.0)
    plug = increment_moments(m, ONE, grid, BrownianDriver(1), 2, paths=200, estimator="plugin")
    cross = increment_moments(m, ONE, grid, BrownianDriver(1), 2, paths=200)
    # the plug-in maximum is never below the cross-fitted value on the same draws
    assert plug.moment >= cross.moment
    with pytest.raises(ValueError):
        increment_moments(m, ONE, grid, BrownianDriver(1), 2, paths=200, estimator="median")
    with pytest.raises(ValueError):
        increment_moments(m, ONE, grid, BrownianDriver(1), 1.5, paths=200)


def test_increments_do_not_depend_on_workers():
    grid = make_grid(1, 2, 16)
    m = power_delay_jump_model(0.5, 2)
    driver = JumpDriver(1.0, MarkDistribution.uniform())
    one = increment_moments(m, ONE, grid, driver, [2, 4], paths=200, workers=1)
    many = increment_moments(m, ONE, grid, driver, [2, 4], paths=200, workers=4)
    assert one == many
