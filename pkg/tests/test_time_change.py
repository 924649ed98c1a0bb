import numpy as np
import pytest
from scipy import stats

from sabrlab.errors import ClockRangeError
from sabrlab.process_models import ModelParams, State2
from sabrlab.simulation import Path, SeedSpec, TimeGrid, simulate_decoupled, simulate_sabr_euler
from sabrlab.time_change import (
    AdditiveFunctional,
    Integrand,
    clock,
    equivalence_experiment,
    inverse_clock,
    ks_two_sample,
    time_change_path,
)


def _const_path(y, T=1.0, n=10):
    t = np.linspace(0, T, n + 1)
    return Path(t, np.ones(n + 1), np.full(n + 1, y), np.zeros(n + 1, bool))


def test_clock_examples():
    assert clock(_const_path(2.0), Integrand.y_squared).reach == pytest.approx(4.0)
    assert clock(_const_path(2.0), Integrand.y_inverse_squared).reach == pytest.approx(0.25)


def test_inverse_examples():
    af = clock(_const_path(1.0), Integrand.y_squared)
    assert inverse_clock(af, 0.5) == pytest.approx(0.5)
    assert inverse_clock(af, 0.0) == 0.0
    with pytest.raises(ClockRangeError):
        inverse_clock(af, 1.5)
    flat = AdditiveFunctional(np.array([0.0, 1.0, 2.0, 3.0]), np.array([0.0, 1.0, 1.0, 2.0]), Integrand.y_squared)
    assert inverse_clock(flat, 1.0) == 1.0


def test_inverse_round_trip():
    path = simulate_sabr_euler(ModelParams(0.5, 0.2), State2(1, 1), TimeGrid.from_step(2.0, 1e-3), SeedSpec(0, 0))
    af = clock(path, Integrand.y_squared)
    t = np.linspace(0, 2.0, 97)
    np.testing.assert_allclose(inverse_clock(af, np.interp(t, af.times, af.values)), t, atol=1e-10)


def test_identity_and_frozen_time_change():
    base = simulate_sabr_euler(ModelParams(0.5, 0.0), State2(1, 1), TimeGrid.from_step(1.0, 0.1), SeedSpec(0, 0))
    ident = AdditiveFunctional(base.times, base.times.copy(), Integrand.y_squared)
    out = time_change_path(base, ident, TimeGrid.from_step(1.0, 0.1))
    np.testing.assert_allclose(out.x, base.x, atol=1e-14)
    out = time_change_path(base, ident, TimeGrid.from_step(2.0, 0.1))
    assert np.all(out.x[10:] == base.x[-1])


def test_clock_rejects_nonpositive_volatility():
    with pytest.raises(ClockRangeError):
        clock(_const_path(0.0), Integrand.y_inverse_squared)


def test_time_change_composition_on_one_path():
    # forward then backward clock recovers the decoupled state at each level
    p = ModelParams(0.5, 0.0)
    base = simulate_decoupled(p, State2(1.0, 1.0), TimeGrid.from_step(100.0, 1e-3), SeedSpec(0, 0, 1), stop_clock=1.0)
    af = clock(base, Integrand.y_inverse_squared)
    np.testing.assert_allclose(af.values, base.inverse_square_clock, rtol=1e-12)
    out = time_change_path(base, af, TimeGrid.from_step(1.0, 0.25))
    assert out.x[0] == 1.0 and out.y[0] == 1.0
    u = inverse_clock(af, 0.5)
    assert out.x[2] == pytest.approx(np.interp(u, base.times, base.x))


def test_ks_examples():
    assert ks_two_sample([1, 2, 3], [1, 2, 3]).statistic == 0.0
    assert ks_two_sample([1, 2, 3], [4, 5, 6]).statistic == 1.0
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=700), rng.normal(0.1, 1.2, size=500)
    ref = stats.ks_2samp(a, b, method="asymp")
    r = ks_two_sample(a, b)
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-15)
    assert r.p_value == pytest.approx(ref.pvalue, rel=0.05)


def test_ks_calibration():
    rng = np.random.default_rng(1)
    rejects = sum(ks_two_sample(rng.normal(size=1000), rng.normal(size=1000)).p_value < 0.01 for _ in range(200))
    assert rejects <= 8


def test_equivalence_small():
    rep = equivalence_experiment(ModelParams(0.5, 0.0), T=1.0, dt=1e-3, n_paths=1500, seeds=(0, 1, 2))
    assert rep.passed
    d = rep.to_dict()
    assert set(d) == {"experiment", "params", "n", "seeds", "ks", "pass"}


def test_equivalence_detects_wrong_model():
    # drifted decoupled vs undrifted direct must be told apart
    p = ModelParams(0.5, 0.0)
    from sabrlab.time_change import _terminal_direct, time_changed_terminal

    grid = TimeGrid.from_step(1.0, 1e-3)
    xd, _, _ = _terminal_direct(p, State2(0.3, 1.0), grid, 0, False, 3000)
    xt = [time_changed_terminal(p, State2(0.3, 1.0), 1.0, 1e-3, SeedSpec(0, i, 1), True)[0] for i in range(3000)]
    assert ks_two_sample(xd, xt).p_value < 1e-6
