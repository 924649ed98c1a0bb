import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sabrlab.errors import CoercivityError, ConfigError
from sabrlab.geometry import sabr_isometry
from sabrlab.process_models import GeneratorKind, GeneratorSpec, ModelParams, apply_generator
from sabrlab.weights import (
    Clause,
    WeightKind,
    WeightSpec,
    adhoc_subeigen_gap,
    adhoc_weight,
    drift_condition_check,
    drift_expression,
    eigen_residual,
    is_dyadic_beta,
    min_legendre_order,
    radial_cosh,
    reference_point,
    regime_verdict,
    sublevel_probe,
    subeigen_audit,
    weight_field,
)


def test_adhoc_values():
    assert adhoc_weight(ModelParams(0.5, 0), 1.0, 1.0) == 4.0
    assert adhoc_weight(ModelParams(0.3, 0), 0.0, 2.5) == 2.5
    assert adhoc_weight(ModelParams(0.0, 0), 2.0, 1.0) == 9.0


def test_gap_example():
    assert adhoc_subeigen_gap(ModelParams(0.0, 0.0), 1.0, 1.0) == pytest.approx(4.0)


def test_gap_closed_form():
    rng = np.random.default_rng(0)
    for b, r, nu in [(0.3, 0.5, 1.0), (0.7, -0.9, 0.6)]:
        p = ModelParams(b, r, nu)
        x, y = rng.uniform(0.1, 5, 100), rng.uniform(0.1, 5, 100)
        psi = adhoc_weight(p, x, y)
        a_psi = (2 - 2 * b) * (1 - 2 * b) * y - 2 * b * (1 - b) * x ** (b - 1) * y**2 - 2 * r * nu * (2 - 2 * b) * x ** (1 - b) + 2 * nu**2 * x ** (2 - 2 * b) / y
        np.testing.assert_allclose(adhoc_subeigen_gap(p, x, y), 2 * psi - a_psi, rtol=1e-11)


def test_gap_fd_cross_check():
    rng = np.random.default_rng(1)
    p = ModelParams(0.5, 0.4)
    f = weight_field(WeightSpec(WeightKind.AdHoc, p))
    g = GeneratorSpec(GeneratorKind.SabrA, p)
    x, y = rng.uniform(0.3, 3, 50), rng.uniform(0.3, 3, 50)
    fd = apply_generator(g, f.value, (x, y), h=1e-4)
    np.testing.assert_allclose(2 * f(x, y) - 2 * fd, adhoc_subeigen_gap(p, x, y), rtol=1e-5, atol=1e-5)


def test_gap_audit_nonnegative():
    for b in (0.0, 0.5, 0.9):
        for r in (-0.9, 0.0, 0.9):
            rep = subeigen_audit(ModelParams(b, r))
            assert rep["min_gap"] >= -1e-12 and not rep["violations"]


def test_radial_values():
    assert radial_cosh(ModelParams(0, 0), 1.0, 1.0, 1.0) == 1.0
    w = WeightSpec(WeightKind.LegendreRadial, ModelParams(0, 0), n=1, c=1.0)
    assert weight_field(w)(1.0, 1.0) == 1.0
    w0 = WeightSpec(WeightKind.LegendreRadial, ModelParams(0.4, 0.2), n=0, c=1.0)
    np.testing.assert_array_equal(weight_field(w0)(np.array([0.5, 3.0]), np.array([2.0, 0.1])), 1.0)


@settings(max_examples=50)
@given(st.floats(0, 0.99), st.floats(-0.99, 0.99), st.floats(0, 5))
def test_radial_cosh_at_least_one(b, r, c):
    rng = np.random.default_rng(7)
    x, y = 10 ** rng.uniform(-3, 3, 200), 10 ** rng.uniform(-3, 3, 200)
    assert np.all(radial_cosh(ModelParams(b, r), c, x, y) >= 1.0 - 1e-12)


def test_radial_analytic_derivatives_match_fd():
    p = ModelParams(0.5, 0.3)
    w = WeightSpec(WeightKind.LegendreRadial, p, n=2, c=1.0)
    f = weight_field(w)
    x, y = np.array([0.7, 1.9]), np.array([1.3, 0.6])
    for kind in (GeneratorKind.SabrA, GeneratorKind.LaplaceBeltrami):
        g = GeneratorSpec(kind, p)
        np.testing.assert_allclose(apply_generator(g, f, (x, y)), apply_generator(g, f.value, (x, y), h=1e-4), rtol=1e-6)


def test_eigen_residual_examples():
    w = WeightSpec(WeightKind.LegendreRadial, ModelParams(0, 0), n=1, c=1.0)
    assert eigen_residual(w, 1.0, 1.0) <= 1e-6
    w0 = WeightSpec(WeightKind.LegendreRadial, ModelParams(0.5, 0.3), n=0, c=1.0)
    assert eigen_residual(w0, 1.3, 0.7) == 0.0
    w2 = WeightSpec(WeightKind.LegendreRadial, ModelParams(0.5, 0.3), n=2, c=1.0)
    g = np.linspace(0.2, 3, 20)
    xx, yy = np.meshgrid(g, g)
    assert eigen_residual(w2, xx, yy).max() <= 1e-5


def test_eigen_identity_with_closed_form_derivatives():
    rng = np.random.default_rng(3)
    for b, r, n, c in [(0.3, -0.4, 3, 0.5), (0.75, 0.6, 2, 2.0), (0.0, 0.0, 4, 0.0)]:
        p = ModelParams(b, r)
        f = weight_field(WeightSpec(WeightKind.LegendreRadial, p, n=n, c=c))
        x, y = rng.uniform(0.2, 3, 100), rng.uniform(0.2, 3, 100)
        lb = apply_generator(GeneratorSpec(GeneratorKind.LaplaceBeltrami, p), f, (x, y))
        np.testing.assert_allclose(2 * lb, n * (n + 1) * f(x, y), rtol=1e-10)


def test_drift_condition():
    g = np.logspace(-2, 2, 40)
    for b in (0.0, 0.3, 0.75):
        for n in (1, 2):
            res = drift_condition_check(WeightSpec(WeightKind.LegendreRadial, ModelParams(b, -0.5), n=n, c=0.0), g, g)
            assert res.ok
    res = drift_condition_check(WeightSpec(WeightKind.LegendreRadial, ModelParams(0.5, 0.9), n=1, c=0.0), g, g)
    assert not res.ok and res.witness is not None
    res = drift_condition_check(WeightSpec(WeightKind.LegendreRadial, ModelParams(0.5, 0.9), n=0, c=0.0), g, g)
    assert res.ok


def test_drift_expression_is_chain_rule():
    p = ModelParams(0.4, -0.3)
    w = WeightSpec(WeightKind.LegendreRadial, p, n=2, c=0.7)
    f = weight_field(w)
    x, y = np.array([0.5, 1.5, 3.0]), np.array([0.4, 1.0, 2.2])
    fx, _ = f.grad(x, y)
    np.testing.assert_allclose(drift_expression(w, x, y), p.beta * y**2 * x ** (2 * p.beta - 1) * fx, rtol=1e-12)


def test_regime_examples():
    assert regime_verdict(1.0, 3, ModelParams(0.7, -0.6)).clause is Clause.C_ge_1
    v = regime_verdict(0.3, 1, ModelParams(0.6, -0.5))
    assert not v.admissible and v.clause is Clause.Rejected
    v = regime_verdict(0.0, 1, ModelParams(0.75, -0.5))
    assert v.admissible and v.clause is Clause.DyadicBetaException
    assert regime_verdict(0.0, 1, ModelParams(0.0, -0.2)).clause is Clause.DyadicBetaException
    assert regime_verdict(0.0, 1, ModelParams(0.5, 0.0)).clause is Clause.Rejected


def _admissible_reference(c, b, r):
    """Admissible when the reference point is realised in the open quadrant."""
    if c + r > 0:
        return True
    return r < 0 and (b == 0 or any(abs(b - (2 * m - 1) / (2 * m)) < 1e-12 for m in range(1, 50)))


def test_regime_table():
    rng = np.random.default_rng(11)
    betas = [0.0, 0.5, 0.75, 5 / 6, 0.3, 0.6, 0.9]
    rhos = [-0.9, -0.5, -0.2, 0.0, 0.2, 0.5]
    cs = [0.0, 0.1, 0.3, 0.5, 1.0, 2.5]
    cases = [(c, b, r) for c in cs for b in betas for r in rhos]
    picked = [cases[i] for i in rng.choice(len(cases), 200, replace=False)]
    for c, b, r in picked:
        v = regime_verdict(c, 2, ModelParams(b, r))
        assert v.admissible == _admissible_reference(c, b, r), (c, b, r, v)


def test_dyadic_and_min_order():
    assert is_dyadic_beta(0.0) and is_dyadic_beta(0.5) and is_dyadic_beta(0.75) and is_dyadic_beta(7 / 8)
    assert not is_dyadic_beta(0.6) and not is_dyadic_beta(2 / 3)
    assert min_legendre_order(0.5) == 1
    assert min_legendre_order(0.75) == 2
    assert min_legendre_order(0.76) == 3
    for b in np.linspace(0, 0.99, 50):
        n = min_legendre_order(b)
        assert b <= (2 * n - 1) / (2 * n) and (n == 1 or b > (2 * n - 3) / (2 * n - 2))


def test_reference_point_identity():
    for c, b, r in [(1.0, 0.5, -0.3), (0.2, 0.25, 0.4), (2.0, 0.0, 0.0), (0.6, 0.75, -0.5)]:
        p = ModelParams(b, r)
        X, Y = reference_point(c, p)
        u, v = sabr_isometry(p, X, Y)
        assert abs(u - c / p.rhobar) <= 1e-12 and v == 1.0


def test_sublevel_probe():
    # the ad hoc weight tends to 0 toward the corner (0, 0): not coercive there
    p = ModelParams(0.5, 0.0)
    assert adhoc_weight(p, 1e-4, 1e-2) < 0.5
    with pytest.raises(CoercivityError):
        sublevel_probe(WeightSpec(WeightKind.AdHoc, p), 0.5)
    with pytest.raises(CoercivityError):
        sublevel_probe(WeightSpec(WeightKind.AdHoc, ModelParams(0.0, 0.0)), 10.0)
    box = sublevel_probe(WeightSpec(WeightKind.LegendreRadial, ModelParams(0.5, 0.3), n=1, c=1.0), 3.0)
    assert box is not None and box.y[0] > 0 and np.isfinite(box.x[1]) and np.isfinite(box.y[1])
    assert sublevel_probe(WeightSpec(WeightKind.LegendreRadial, ModelParams(0.5, 0.3), n=1, c=1.0), 0.5) is None


def test_weight_spec_validation():
    with pytest.raises(ConfigError):
        WeightSpec(WeightKind.AdHoc, ModelParams(1.0, 0.0))
