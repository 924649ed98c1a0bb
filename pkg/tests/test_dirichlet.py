import math

import numpy as np
import pytest
import sympy as sp

from sabrlab.dirichlet import (
    ClosabilityVerdict,
    EnergyKind,
    FormSpec,
    HamzaFamily,
    SpeedKind,
    Verdict,
    arbitrate_beta1,
    classify_symmetrizable,
    ellipticity_constant,
    energy_density,
    form_value,
    gamma_from_gradients,
    hamza_closable,
    no_drift_residual,
    psd_check,
    quadratic_form,
    speed_density,
    symmetry_defect,
    witness_search,
)
from sabrlab.process_models import GeneratorKind, GeneratorSpec, ModelParams, bump_field, polynomial_field, product_field

WHOLE = ((1e-12, math.inf), (1e-12, math.inf))


def _form(p, speed, energy=EnergyKind.SabrGamma):
    return FormSpec(energy, speed_density(speed, p), p)


def test_energy_examples():
    p = ModelParams(0.5, 0.3)
    assert gamma_from_gradients(EnergyKind.SabrGamma, p, 1.0, 2.0, (1.0, 0.0), (1.0, 0.0)) == pytest.approx(4.0)
    assert gamma_from_gradients(EnergyKind.SabrGamma, p, 1.0, 2.0, (1.0, 0.4), (0.0, 0.0)) == 0.0
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0.1, 3, 100), rng.uniform(0.1, 3, 100)
    g1, g2 = rng.normal(size=(2, 100)), rng.normal(size=(2, 100))
    full = gamma_from_gradients(EnergyKind.SabrGamma, p, x, y, g1, g2)
    reduced = gamma_from_gradients(EnergyKind.TimeChangedGamma, p, x, y, g1, g2)
    np.testing.assert_allclose(full, y**2 * reduced, rtol=1e-13)
    # bilinearity and symmetry
    g3 = rng.normal(size=(2, 100))
    lhs = gamma_from_gradients(EnergyKind.SabrGamma, p, x, y, g1, 2 * g2 + 3 * g3)
    rhs = 2 * full + 3 * gamma_from_gradients(EnergyKind.SabrGamma, p, x, y, g1, g3)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(full, gamma_from_gradients(EnergyKind.SabrGamma, p, x, y, g2, g1), rtol=1e-15)
    assert np.all(gamma_from_gradients(EnergyKind.SabrGamma, p, x, y, g1, g1) >= 0)


def test_energy_density_on_fields():
    p = ModelParams(0.5, 0.0)
    f = polynomial_field({(1, 0): 1.0})
    assert energy_density(_form(p, SpeedKind.M0), f, f, 1.0, 2.0) == pytest.approx(4.0)


def test_form_basic_properties():
    p = ModelParams(0.5, 0.3)
    form = _form(p, SpeedKind.M0)
    u, v = bump_field(1.0, 1.0, 0.4, 0.4), bump_field(1.2, 0.9, 0.5, 0.3)
    zero = polynomial_field({})
    assert form_value(form, u, zero, WHOLE).value == 0.0
    assert form_value(form, u, u, WHOLE).value > 0
    a, b = form_value(form, u, v, WHOLE), form_value(form, v, u, WHOLE)
    assert abs(a.value - b.value) <= max(a.tolerance, b.tolerance)


def test_defect_examples():
    u, v = bump_field(1.0, 1.1, 0.4, 0.35), bump_field(1.15, 0.95, 0.45, 0.4)
    p = ModelParams(0.5, 0.3)
    res = symmetry_defect(_form(p, SpeedKind.M0), GeneratorSpec(GeneratorKind.LaplaceBeltrami, p), u, v, WHOLE)
    assert res.small
    for b in (0.25, 0.5, 0.9):
        p = ModelParams(b, 0.0, nu=1.3)
        res = symmetry_defect(_form(p, SpeedKind.M1), GeneratorSpec(GeneratorKind.SabrA, p), u, v, WHOLE)
        assert res.small
        res = symmetry_defect(
            _form(p, SpeedKind.M1Tilde, EnergyKind.TimeChangedGamma), GeneratorSpec(GeneratorKind.TimeChangedAtilde, p), u, v, WHOLE
        )
        assert res.small
    p = ModelParams(0.5, 0.5)
    wit = witness_search(_form(p, SpeedKind.M1), GeneratorSpec(GeneratorKind.SabrA, p), trials=10)
    assert wit.ratio >= 10


def test_weighted_operator_is_symmetric_for_m1():
    p = ModelParams(0.6, 0.4)
    u, v = bump_field(1.0, 1.0, 0.4, 0.4), bump_field(0.9, 1.2, 0.5, 0.5)
    res = symmetry_defect(_form(p, SpeedKind.M1), GeneratorSpec(GeneratorKind.WeightedLaplaceBeltrami, p), u, v, WHOLE)
    assert res.small


def test_cev_form():
    p = ModelParams(0.3, 0.0, sigma=1.4)
    form = FormSpec(EnergyKind.CevGamma, speed_density(SpeedKind.CevMBeta, p), p)
    u, v = bump_field(1.0, 1.0, 0.5, 10.0), bump_field(1.2, 1.0, 0.4, 10.0)
    res = symmetry_defect(form, GeneratorSpec(GeneratorKind.Cev, p), u, v, ((1e-12, math.inf), (1.0, 1.0)))
    assert res.small
    a, b = form_value(form, u, v, ((1e-12, math.inf), (1.0, 1.0))), form_value(form, v, u, ((1e-12, math.inf), (1.0, 1.0)))
    assert abs(a.value - b.value) <= a.tolerance


def test_carre_du_champ_identity():
    p = ModelParams(0.4, -0.3)
    form = _form(p, SpeedKind.M0)
    u, v = bump_field(1.0, 1.0, 0.5, 0.4), bump_field(1.1, 1.1, 0.5, 0.5)
    lhs = 2 * form_value(form, product_field(u, v), u, WHOLE).value - form_value(form, product_field(u, u), v, WHOLE).value

    from scipy.integrate import simpson

    xs, ys = np.linspace(0.5, 1.5, 513), np.linspace(0.6, 1.4, 513)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    gu = u.grad(xx, yy)
    integrand = gamma_from_gradients(EnergyKind.SabrGamma, p, xx, yy, gu, gu) * v(xx, yy) * form.speed(xx, yy)
    rhs = simpson(simpson(integrand, x=ys, axis=1), x=xs)
    assert lhs == pytest.approx(rhs, rel=1e-6)


def test_no_drift_residual_examples():
    x, y = np.array([0.4, 1.0, 2.7]), np.array([0.3, 1.5, 4.0])
    for p, kind in [(ModelParams(0.0, 0.0), SpeedKind.M0), (ModelParams(0.7, 0.0), SpeedKind.M1), (ModelParams(0.0, 0.6), SpeedKind.M0)]:
        r1, r2 = no_drift_residual(p, speed_density(kind, p), x, y)
        assert np.max(np.abs(r1)) < 1e-12 and np.max(np.abs(r2)) < 1e-12
    p = ModelParams(0.5, 0.5)
    r1, r2 = no_drift_residual(p, speed_density(SpeedKind.M1, p), x, y)
    assert np.max(np.abs(r2)) > 0.1


def test_residual_log_gradients_are_exact():
    xs, ys = sp.symbols("x y", positive=True)
    r, nu = sp.Rational(2, 5), sp.Rational(3, 2)
    rb2 = 1 - r**2
    m = sp.exp(r * ys / (nu * rb2)) / (ys**2 * xs ** (1 + 1 / rb2))
    p = ModelParams(1.0, float(r), float(nu))
    dens = speed_density(SpeedKind.Beta1, p)
    a, b = dens.scaled_log_grad(1.3, 0.7)
    ea = sp.simplify(xs * sp.diff(m, xs) / m).subs({xs: 1.3, ys: 0.7})
    eb = sp.simplify(ys * sp.diff(m, ys) / m).subs({xs: 1.3, ys: 0.7})
    assert float(a) == pytest.approx(float(ea), rel=1e-13)
    assert float(b) == pytest.approx(float(eb), rel=1e-13)
    assert float(dens(1.3, 0.7)) == pytest.approx(float(m.subs({xs: 1.3, ys: 0.7})), rel=1e-13)


@pytest.mark.parametrize("rho,nu", [(0.5, 1.0), (-0.3, 2.0), (0.8, 0.5)])
def test_beta_one_arbitration(rho, nu):
    p = ModelParams(1.0, rho, nu)
    winner, table = arbitrate_beta1(p)
    assert winner is SpeedKind.Beta1
    assert table[SpeedKind.Beta1] <= 1e-10 < table[SpeedKind.Beta1Literal]
    c = classify_symmetrizable(p)
    assert c.verdict is Verdict.Beta1Special and c.density.name == SpeedKind.Beta1.value


def test_classification_examples():
    assert classify_symmetrizable(ModelParams(0.0, 0.5)).verdict is Verdict.Beta0
    assert classify_symmetrizable(ModelParams(0.7, 0.0)).verdict is Verdict.RhoZeroWeighted
    assert classify_symmetrizable(ModelParams(0.5, 0.5)).verdict is Verdict.NotSymmetrizable
    assert classify_symmetrizable(ModelParams(0.5, 0.5, nu=0.0)).verdict is Verdict.NuZeroCEV


def test_hamza_examples():
    v = hamza_closable(HamzaFamily.CevPower, 0.3)
    assert v.closable and v.singular_set == ()
    v = hamza_closable(HamzaFamily.M1Slice, 0.6)
    assert not v.closable and not v.radon
    v = hamza_closable(HamzaFamily.TerElst, 0.5)
    assert v.singular_set == (0.0,) and v.varadhan_valid is False
    assert isinstance(v, ClosabilityVerdict)


def test_hamza_thresholds():
    for b in (0.0, 0.25, 0.49, 0.5, 0.75, 1.0):
        assert hamza_closable(HamzaFamily.M0Slice, b).closable == (b < 1)
        assert hamza_closable(HamzaFamily.M1Slice, b).closable == (b < 0.5)
        assert hamza_closable(HamzaFamily.CevPower, b).closable == (b < 0.5)
        assert hamza_closable(HamzaFamily.TerElst, b).varadhan_valid == (b < 0.5)


def test_quadratic_form():
    p = ModelParams(0.5, 0.3)
    assert psd_check(p, 1.2, 0.8, (0.0, 0.0)) == 0.0
    for rho in (1.0, -1.0):
        x = 2.0
        assert quadratic_form(0.5, rho, 1.0, x, 1.5, (1.0, -rho * x**0.5)) == pytest.approx(0.0, abs=1e-14)
    rng = np.random.default_rng(0)
    for _ in range(200):
        v = rng.normal(size=2)
        assert psd_check(p, rng.uniform(0.1, 3), rng.uniform(0.1, 3), v) > 0
    assert ellipticity_constant(p, ((0.5, 2.0), (0.5, 2.0))) > 0


def test_support_leak_warning(caplog):
    p = ModelParams(0.5, 0.0)
    form = _form(p, SpeedKind.M1)
    u = bump_field(1.0, 1.0, 0.5, 0.5)
    with caplog.at_level("WARNING", logger="sabrlab.dirichlet"):
        form_value(form, u, u, ((0.8, 1.2), (0.8, 1.2)), n=32)
    assert "boundary" in caplog.text
    caplog.clear()
    with caplog.at_level("WARNING", logger="sabrlab.dirichlet"):
        form_value(form, u, u, WHOLE, n=32)
    assert caplog.text == ""
