"""Dirichlet forms attached to SABR-type operators.

The energy density of the SABR generator is the symmetric bilinear form

    Gamma(f, g) = y^2 (x^{2b} f_x g_x + rho nu x^b (f_x g_y + f_y g_x) + nu^2 f_y g_y)

and the form with speed density m is E(f, g) = 1/2 int Gamma(f, g) m. A
generator G is symmetric for m when <G f, g>_m = -E(f, g) for compactly
supported f, g; for a second-order G with the same principal part this
holds iff the first-order parts match, which reduces to two linear
equations in the log-derivatives of m (``no_drift_residual``).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import simpson

from .errors import ConfigError, DomainError
from .process_models import (
    GeneratorKind,
    GeneratorSpec,
    ModelParams,
    ScalarField,
    _derivatives,
    bump_field,
    generator_terms,
    xpow,
)

log = logging.getLogger(__name__)

QUAD_FLOOR = 1e-8
LEAK_TOL = 1e-8
ARBITRATION_TOL = 1e-10


class EnergyKind(enum.Enum):
    SabrGamma = "SabrGamma"
    TimeChangedGamma = "TimeChangedGamma"
    CevGamma = "CevGamma"


@dataclass(frozen=True)
class SpeedDensity:
    """Density m(x, y) with log-derivatives (x m_x / m, y m_y / m)."""

    name: str
    value: Callable
    scaled_log_grad: Callable

    def __call__(self, x, y):
        return self.value(x, y)


class SpeedKind(enum.Enum):
    M0 = "M0"
    M1 = "M1"
    M0Tilde = "M0Tilde"
    M1Tilde = "M1Tilde"
    CevMBeta = "CevMBeta"
    Beta1 = "Beta1"
    Beta1Literal = "Beta1Literal"


def speed_density(kind: SpeedKind, p: ModelParams) -> SpeedDensity:
    """Closed-form speed densities.

    M_j = 1 / (rhobar x^{b(1+j)} y^2), the tilde variants omit y^-2,
    CevMBeta = x^{-2b}. ``Beta1`` is exp(rho y / (nu rhobar^2)) / (y^2 x^{1 + 1/rhobar^2})
    and ``Beta1Literal`` the same with exponent rho y / rhobar; only one of
    them balances the first-order terms at beta = 1.
    """
    b, r, nu, rb = p.beta, p.rho, p.nu, p.rhobar

    def ones(x, y):
        return np.ones(np.broadcast(np.asarray(x), np.asarray(y)).shape)

    if kind in (SpeedKind.M0, SpeedKind.M1, SpeedKind.M0Tilde, SpeedKind.M1Tilde):
        j = 0 if kind in (SpeedKind.M0, SpeedKind.M0Tilde) else 1
        ypow = 2.0 if kind in (SpeedKind.M0, SpeedKind.M1) else 0.0
        e = b * (1 + j)
        return SpeedDensity(
            kind.value,
            lambda x, y: 1.0 / (rb * xpow(x, e) * np.asarray(y, dtype=float) ** ypow),
            lambda x, y: (-e * ones(x, y), -ypow * ones(x, y)),
        )
    if kind is SpeedKind.CevMBeta:
        return SpeedDensity(kind.value, lambda x, y: xpow(x, -2 * b) * ones(x, y), lambda x, y: (-2 * b * ones(x, y), 0 * ones(x, y)))
    if kind in (SpeedKind.Beta1, SpeedKind.Beta1Literal):
        if nu == 0:
            raise ConfigError("the beta = 1 density needs nu > 0")
        k = 1.0 + 1.0 / rb**2
        lam = r / (nu * rb**2) if kind is SpeedKind.Beta1 else r / rb

        def value(x, y):
            y = np.asarray(y, dtype=float)
            return np.exp(lam * y) / (y * y * np.asarray(x, dtype=float) ** k)

        return SpeedDensity(kind.value, value, lambda x, y: (-k * ones(x, y), lam * np.asarray(y, dtype=float) - 2.0))
    raise ConfigError(f"unknown speed density {kind}")


@dataclass(frozen=True)
class FormSpec:
    energy: EnergyKind
    speed: SpeedDensity
    params: ModelParams


def gamma_from_gradients(energy: EnergyKind, p: ModelParams, x, y, g1, g2):
    """Energy density from gradients g1 = (f_x, f_y), g2 = (h_x, h_y)."""
    (ax, ay), (bx, by) = g1, g2
    xb = xpow(x, p.beta)
    if energy is EnergyKind.CevGamma:
        return p.sigma**2 * xb * xb * ax * bx
    core = xb * xb * ax * bx + p.rho * p.nu * xb * (ax * by + ay * bx) + p.nu**2 * ay * by
    if energy is EnergyKind.SabrGamma:
        return np.asarray(y, dtype=float) ** 2 * core
    return core


def _grad(f, x, y):
    if isinstance(f, ScalarField) and f.grad is not None:
        return f.grad(x, y)
    fx, fy, *_ = _derivatives(f if isinstance(f, ScalarField) else ScalarField(f), x, y, None)
    return fx, fy


def energy_density(form: FormSpec, f1, f2, x, y):
    """Gamma(f1, f2) at (x, y)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("energy density is evaluated on the open quadrant")
    return gamma_from_gradients(form.energy, form.params, x, y, _grad(f1, x, y), _grad(f2, x, y))


# ------------------------------------------------------------- quadrature


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float

    @property
    def tolerance(self) -> float:
        return max(QUAD_FLOOR, 10.0 * self.error)


def _clip_box(box, *fields):
    (x0, x1), (y0, y1) = box
    for f in fields:
        if isinstance(f, ScalarField) and f.support is not None:
            (a0, a1), (b0, b1) = f.support
            x0, x1, y0, y1 = max(x0, a0), min(x1, a1), max(y0, b0), min(y1, b1)
    return (x0, x1), (y0, y1)


def _warn_support_leak(box, one_d, *fields):
    """Warn when a field is not negligible on the edge of a finite ``box``."""
    (x0, x1), (y0, y1) = box
    if one_d:
        y0 = y1 = 1.0
    if not all(np.isfinite(v) for v in (x0, x1, y0, y1)):
        return False
    t = np.linspace(0.0, 1.0, 65)
    xs = np.concatenate([np.full_like(t, x0), np.full_like(t, x1), x0 + t * (x1 - x0), x0 + t * (x1 - x0)])
    ys = np.concatenate([y0 + t * (y1 - y0), y0 + t * (y1 - y0), np.full_like(t, y0), np.full_like(t, y1)])
    for f in fields:
        if np.max(np.abs(f(xs, ys))) > LEAK_TOL:
            log.warning("test function exceeds %g on the boundary of %s", LEAK_TOL, box)
            return True
    return False


def _simpson2d(fun, box, n, one_d=False):
    (x0, x1), (y0, y1) = box
    if x1 <= x0 or (not one_d and y1 <= y0):
        return 0.0
    xs = np.linspace(x0, x1, n + 1)
    if one_d:
        return float(simpson(fun(xs, np.ones_like(xs)), x=xs))
    ys = np.linspace(y0, y1, n + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    return float(simpson(simpson(fun(xx, yy), x=ys, axis=1), x=xs))


def _halving(fun, box, n, one_d):
    if n % 4:
        raise ConfigError("quadrature resolution must be a multiple of 4")
    fine = _simpson2d(fun, box, n, one_d)
    coarse = _simpson2d(fun, box, n // 2, one_d)
    return QuadResult(fine, abs(fine - coarse))


def form_value(form: FormSpec, f1, f2, box, n: int = 256) -> QuadResult:
    """E(f1, f2) = 1/2 int Gamma(f1, f2) m over ``box`` by tensor Simpson.

    The box is intersected with the supports of the fields. For CevGamma
    the integral is over x only (fields are evaluated at y = 1).
    """
    box = _clip_box(box, f1, f2)
    if box[0][0] <= 0 or (form.energy is not EnergyKind.CevGamma and box[1][0] <= 0):
        raise DomainError("integration box must lie in the open quadrant")
    _warn_support_leak(box, form.energy is EnergyKind.CevGamma, f1, f2)

    def integrand(x, y):
        return 0.5 * gamma_from_gradients(form.energy, form.params, x, y, _grad(f1, x, y), _grad(f2, x, y)) * form.speed(x, y)

    return _halving(integrand, box, n, form.energy is EnergyKind.CevGamma)


def pairing(gen: GeneratorSpec, form: FormSpec, f1, f2, box, n: int = 256) -> QuadResult:
    """<G f1, f2>_m over ``box``."""
    box = _clip_box(box, f1, f2)
    f1s = f1 if isinstance(f1, ScalarField) else ScalarField(f1)

    def integrand(x, y):
        gf = generator_terms(gen.kind, gen.params, x, y, _derivatives(f1s, x, y, None))
        return gf * f2(x, y) * form.speed(x, y)

    return _halving(integrand, box, n, form.energy is EnergyKind.CevGamma)


@dataclass(frozen=True)
class DefectResult:
    defect: float
    tolerance: float

    @property
    def small(self) -> bool:
        return self.defect <= self.tolerance


def symmetry_defect(form: FormSpec, gen: GeneratorSpec, f1, f2, box, n: int = 256) -> DefectResult:
    """|<G f1, f2>_m + E(f1, f2)| with a grid-halving tolerance.

    Both terms are integrated together, so the tolerance is
    max(1e-8, 10 |D_n - D_{n/2}|) for the combined integral D.
    """
    box = _clip_box(box, f1, f2)
    if box[0][0] <= 0 or (form.energy is not EnergyKind.CevGamma and box[1][0] <= 0):
        raise DomainError("integration box must lie in the open quadrant")
    _warn_support_leak(box, form.energy is EnergyKind.CevGamma, f1, f2)
    f1s = f1 if isinstance(f1, ScalarField) else ScalarField(f1)

    def integrand(x, y):
        d1 = _derivatives(f1s, x, y, None)
        gf = generator_terms(gen.kind, gen.params, x, y, d1)
        gam = gamma_from_gradients(form.energy, form.params, x, y, d1[:2], _grad(f2, x, y))
        return (gf * f2(x, y) + 0.5 * gam) * form.speed(x, y)

    q = _halving(integrand, box, n, form.energy is EnergyKind.CevGamma)
    return DefectResult(abs(q.value), q.tolerance)


@dataclass
class Witness:
    ratio: float
    defect: float
    tolerance: float
    bumps: tuple = field(default_factory=tuple)


def random_bump_pair(rng: np.random.Generator, region=((0.5, 2.0), (0.5, 2.0))):
    (xl, xh), (yl, yh) = region
    cx, cy = rng.uniform(xl, xh), rng.uniform(yl, yh)
    wx, wy = rng.uniform(0.15, 0.4) * cx, rng.uniform(0.15, 0.4) * cy
    f1 = (cx, cy, wx, wy)
    f2 = (cx + rng.uniform(-0.5, 0.5) * wx, cy + rng.uniform(-0.5, 0.5) * wy, wx * rng.uniform(0.7, 1.3), wy * rng.uniform(0.7, 1.3))
    return f1, f2


def witness_search(form: FormSpec, gen: GeneratorSpec, trials: int = 50, seed: int = 0, n: int = 256) -> Witness:
    """Largest defect-to-tolerance ratio over random overlapping bump pairs."""
    rng = np.random.default_rng(seed)
    best = Witness(-1.0, 0.0, 0.0)
    for _ in range(trials):
        b1, b2 = random_bump_pair(rng)
        f1, f2 = bump_field(*b1), bump_field(*b2)
        res = symmetry_defect(form, gen, f1, f2, ((1e-12, np.inf), (1e-12, np.inf)), n)
        ratio = res.defect / res.tolerance
        if ratio > best.ratio:
            best = Witness(ratio, res.defect, res.tolerance, (b1, b2))
    return best


# ---------------------------------------------------------- classification


def no_drift_residual(p: ModelParams, m: SpeedDensity, x, y):
    """First-order mismatch between the SABR generator and the form with density m.

    With a = x m_x / m and b = y m_y / m:
        r1 = x^{2b-1} y^2 (2 beta + a) + rho nu x^beta y (2 + b)
        r2 = rho nu x^{beta-1} y^2 (beta + a) + nu^2 y (2 + b)
    Both vanish iff the generator is symmetric with respect to m.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("residual is evaluated on the open quadrant")
    bt, r, nu = p.beta, p.rho, p.nu
    a, b = m.scaled_log_grad(x, y)
    r1 = xpow(x, 2 * bt - 1) * y * y * (2 * bt + a) + r * nu * xpow(x, bt) * y * (2 + b)
    r2 = r * nu * xpow(x, bt - 1) * y * y * (bt + a) + nu**2 * y * (2 + b)
    return r1, r2


class Verdict(enum.Enum):
    Beta0 = "Beta0"
    NuZeroCEV = "NuZeroCEV"
    RhoZeroWeighted = "RhoZeroWeighted"
    Beta1Special = "Beta1Special"
    NotSymmetrizable = "NotSymmetrizable"


@dataclass(frozen=True)
class Classification:
    verdict: Verdict
    density: Optional[SpeedDensity]
    generator: GeneratorSpec


def arbitration_points(n: int = 100, seed: int = 12345):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.2, 5.0, n), rng.uniform(0.2, 5.0, n)


def arbitrate_beta1(p: ModelParams, candidates=(SpeedKind.Beta1, SpeedKind.Beta1Literal)):
    """Residual of each candidate density at 100 sample points; returns (winner, table)."""
    x, y = arbitration_points()
    table = {}
    for kind in candidates:
        r1, r2 = no_drift_residual(p, speed_density(kind, p), x, y)
        table[kind] = float(max(np.max(np.abs(r1)), np.max(np.abs(r2))))
    ok = [k for k, v in table.items() if v <= ARBITRATION_TOL]
    if len(ok) != 1:
        raise DomainError(f"beta = 1 arbitration is inconclusive: {table}")
    return ok[0], table


def classify_symmetrizable(p: ModelParams) -> Classification:
    """Which symmetric setting applies to the SABR generator, checked in order."""
    gen = GeneratorSpec(GeneratorKind.SabrA, p)
    if p.beta == 0:
        return Classification(Verdict.Beta0, speed_density(SpeedKind.M0, p), gen)
    if p.nu == 0:
        return Classification(Verdict.NuZeroCEV, speed_density(SpeedKind.M1, p), gen)
    if p.rho == 0:
        return Classification(Verdict.RhoZeroWeighted, speed_density(SpeedKind.M1, p), gen)
    if p.beta == 1:
        kind, _ = arbitrate_beta1(p)
        return Classification(Verdict.Beta1Special, speed_density(kind, p), gen)
    return Classification(Verdict.NotSymmetrizable, None, gen)


# ------------------------------------------------------------- closability


class HamzaFamily(enum.Enum):
    CevPower = "CevPower"
    M0Slice = "M0Slice"
    M1Slice = "M1Slice"
    TerElst = "TerElst"


@dataclass(frozen=True)
class ClosabilityVerdict:
    closable: bool
    singular_set: tuple
    radon: bool
    varadhan_valid: Optional[bool]
    coefficient_exponent: float
    speed_exponent: float


def hamza_exponents(family: HamzaFamily, beta: float):
    """Power exponents at 0 of (coefficient x speed) and of the speed density.

    CevPower: sigma^2 x^{2b} against x^{-2b}; M0Slice: x^{2b} against
    x^{-b}; M1Slice: x^{2b} against x^{-2b}; TerElst: x^{2b}/(1+x^2)^b
    against Lebesgue measure.
    """
    table = {
        HamzaFamily.CevPower: (0.0, -2 * beta),
        HamzaFamily.M0Slice: (beta, -beta),
        HamzaFamily.M1Slice: (0.0, -2 * beta),
        HamzaFamily.TerElst: (2 * beta, 0.0),
    }
    return table[family]


def hamza_closable(family: HamzaFamily, beta: float) -> ClosabilityVerdict:
    """One-dimensional closability via the Hamza condition near x = 0.

    A point is regular when the reciprocal of the weighted coefficient is
    locally integrable there, i.e. exponent < 1; the singular set is {0}
    otherwise. Lebesgue-null singular sets satisfy the Hamza condition, so
    closability reduces to the speed measure being Radon (exponent > -1).
    """
    if not 0 <= beta <= 1:
        raise ConfigError("beta must lie in [0, 1]")
    ec, em = hamza_exponents(family, beta)
    singular = (0.0,) if ec >= 1 else ()
    radon = em > -1
    varadhan = (len(singular) == 0) if family is HamzaFamily.TerElst else None
    return ClosabilityVerdict(radon, singular, radon, varadhan, ec, em)


def quadratic_form(beta: float, rho: float, nu: float, x, y, v) -> float:
    """v^T xi v for raw coefficients; |rho| = 1 is allowed (degenerate matrix)."""
    xb = float(xpow(x, beta))
    v1, v2 = v
    return float(y * y * (xb * xb * v1 * v1 + 2 * rho * nu * xb * v1 * v2 + nu**2 * v2 * v2))


def psd_check(p: ModelParams, x, y, v) -> float:
    """v^T xi v for the SABR diffusion matrix (nonnegative)."""
    return quadratic_form(p.beta, p.rho, p.nu, x, y, v)


def ellipticity_constant(p: ModelParams, box, n: int = 64) -> float:
    """Smallest eigenvalue of the diffusion matrix over an n x n grid on ``box``."""
    (x0, x1), (y0, y1) = box
    xx, yy = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n), indexing="ij")
    xb = xpow(xx, p.beta)
    a, b, c = yy**2 * xb * xb, p.rho * p.nu * yy**2 * xb, p.nu**2 * yy**2
    lam = 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return float(lam.min())
