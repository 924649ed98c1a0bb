"""Admissible weight functions for weighted sup-norm spaces on the SABR plane.

Two families are provided:

* ``AdHoc``: psi = y + 2 x^(1-b) + x^(2-2b) / y, a sub-eigenfunction of the
  SABR generator with 2 psi - 2 A psi >= 0.
* ``LegendreRadial``: psi = P_n(r_c) where r_c is the cosh of the SABR distance
  to a reference point; these are eigenfunctions of the geometric
  Laplace-Beltrami operator (twice the generator-normalised one) with
  eigenvalue n (n + 1).

The SABR-plane geometry is the nu = 1 normalisation, so operators applied to
radial weights use nu = 1.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import CoercivityError, ConfigError, DomainError
from .geometry import _primitive, legendre_derivatives, legendre_with_derivative
from .process_models import (
    GeneratorKind,
    GeneratorSpec,
    ModelParams,
    ScalarField,
    apply_generator,
    generator_terms,
    xpow,
)

GAP_TOL = 1e-12


class WeightKind(enum.Enum):
    AdHoc = "AdHoc"
    LegendreRadial = "LegendreRadial"


@dataclass(frozen=True)
class WeightSpec:
    kind: WeightKind
    params: ModelParams
    n: int = 0
    c: float = 0.0

    def __post_init__(self):
        if self.params.beta >= 1.0:
            raise ConfigError("weight functions are defined for beta < 1")
        if self.kind is WeightKind.LegendreRadial:
            if self.n < 0 or int(self.n) != self.n:
                raise ConfigError("Legendre order must be a non-negative integer")
            if self.c < 0:
                raise ConfigError("reference shift c must be >= 0")

    def label(self) -> str:
        if self.kind is WeightKind.AdHoc:
            return "AdHoc"
        return f"LegendreRadial(n={self.n},c={self.c})"


# ------------------------------------------------------------------ ad hoc


def adhoc_weight(p: ModelParams, x, y):
    b = p.beta
    y = np.asarray(y, dtype=float)
    return y + 2 * xpow(x, 1 - b) + xpow(x, 2 - 2 * b) / y


def _adhoc_derivs(p: ModelParams, x, y):
    b = p.beta
    y = np.asarray(y, dtype=float)
    x2 = xpow(x, 2 - 2 * b)
    fx = 2 * (1 - b) * xpow(x, -b) + (2 - 2 * b) * xpow(x, 1 - 2 * b) / y
    fy = 1 - x2 / y**2
    fxx = (2 - 2 * b) * (1 - 2 * b) * xpow(x, -2 * b) / y
    if b > 0:
        fxx = fxx - 2 * b * (1 - b) * xpow(x, -b - 1)
    fxy = -(2 - 2 * b) * xpow(x, 1 - 2 * b) / y**2
    fyy = 2 * x2 / y**3
    return fx, fy, fxx, fxy, fyy


def adhoc_subeigen_gap(p: ModelParams, x, y):
    """2 psi - y^2 (x^{2b} psi_xx + 2 rho nu x^b psi_xy + nu^2 psi_yy).

    The operator term is twice the generator, evaluated from closed-form
    derivatives of psi.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("gap is evaluated on the open quadrant")
    a_psi = 2 * generator_terms(GeneratorKind.SabrA, p, x, y, _adhoc_derivs(p, x, y))
    return 2 * adhoc_weight(p, x, y) - a_psi


# ---------------------------------------------------------- Legendre radial


def radial_cosh(p: ModelParams, c: float, x, y):
    """r_c: cosh of the distance to the point mapped to (c / rhobar, 1)."""
    y = np.asarray(y, dtype=float)
    q = _primitive(x, p.beta) - p.rho * y - c
    return (1 + y * y) / (2 * y) + q * q / ((1 - p.rho**2) * 2 * y)


def _radial_cosh_derivs(p: ModelParams, c: float, x, y):
    b, r = p.beta, p.rho
    rb2 = 1 - r * r
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    q = _primitive(x, b) - r * y - c
    xmb = xpow(x, -b)
    rx = q * xmb / (rb2 * y)
    ry = (y * y - 1) / (2 * y * y) - r * q / (rb2 * y) - q * q / (2 * rb2 * y * y)
    rxx = (xmb * xmb - b * q * xpow(x, -b - 1)) / (rb2 * y) if b > 0 else xmb * xmb / (rb2 * y)
    rxy = -r * xmb / (rb2 * y) - q * xmb / (rb2 * y * y)
    ryy = 1 / y**3 + r * r / (rb2 * y) + 2 * r * q / (rb2 * y * y) + q * q / (rb2 * y**3)
    return rx, ry, rxx, rxy, ryy


def weight_field(w: WeightSpec) -> ScalarField:
    """The weight as a ScalarField with closed-form derivatives."""
    p = w.params
    if w.kind is WeightKind.AdHoc:
        return ScalarField(
            lambda x, y: adhoc_weight(p, x, y),
            grad=lambda x, y: _adhoc_derivs(p, x, y)[:2],
            hess=lambda x, y: _adhoc_derivs(p, x, y)[2:],
        )

    def value(x, y):
        return legendre_derivatives(w.n, radial_cosh(p, w.c, x, y))[0]

    def derivs(x, y):
        _, d1, d2 = legendre_derivatives(w.n, radial_cosh(p, w.c, x, y))
        rx, ry, rxx, rxy, ryy = _radial_cosh_derivs(p, w.c, x, y)
        return (
            d1 * rx,
            d1 * ry,
            d2 * rx * rx + d1 * rxx,
            d2 * rx * ry + d1 * rxy,
            d2 * ry * ry + d1 * ryy,
        )

    return ScalarField(value, grad=lambda x, y: derivs(x, y)[:2], hess=lambda x, y: derivs(x, y)[2:])


def eigen_residual(w: WeightSpec, x, y, h: Optional[float] = None, richardson: bool = True):
    """|2 LB psi - n(n+1) psi| / max(1, psi) for a radial Legendre weight.

    LB is the generator-normalised Laplace-Beltrami operator at nu = 1, so
    twice it is the geometric one. Derivatives are central differences with
    step ``h`` (default 1e-3 * max(1, |x|, |y|)); with ``richardson`` the
    operator is extrapolated from steps h and h/2.
    """
    if w.kind is not WeightKind.LegendreRadial:
        raise ConfigError("eigen_residual applies to LegendreRadial weights")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if h is None:
        h = 1e-3 * np.maximum(1.0, np.maximum(np.abs(x), np.abs(y)))
    g = GeneratorSpec(GeneratorKind.LaplaceBeltrami, replace(w.params, nu=1.0))
    f = weight_field(w).value
    lb = apply_generator(g, f, (x, y), h=h)
    if richardson:
        lb = (4 * apply_generator(g, f, (x, y), h=h / 2) - lb) / 3
    psi = f(x, y)
    return np.abs(2 * lb - w.n * (w.n + 1) * psi) / np.maximum(1.0, psi)


def drift_expression(w: WeightSpec, x, y):
    """b y^2 x^(2b-1) d psi / dx in its factored closed form."""
    p = w.params
    b, r = p.beta, p.rho
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _, d1 = legendre_with_derivative(w.n, radial_cosh(p, w.c, x, y))
    bracket = y / (1 - b) - xpow(x, b - 1) * y * (r * y + w.c)
    return d1 * b / (1 - r * r) * bracket


@dataclass(frozen=True)
class DriftCheck:
    ok: bool
    witness: Optional[tuple]
    min_value: float


def drift_condition_check(w: WeightSpec, x, y) -> DriftCheck:
    """Check b y^2 x^(2b-1) psi_x >= 0 at every grid point (constant 0)."""
    if w.kind is not WeightKind.LegendreRadial:
        raise ConfigError("drift condition applies to LegendreRadial weights")
    xx, yy = np.meshgrid(np.asarray(x, dtype=float), np.asarray(y, dtype=float), indexing="ij")
    vals = drift_expression(w, xx, yy)
    scale = max(1.0, float(np.max(np.abs(vals))))
    k = int(np.argmin(vals))
    vmin = float(vals.flat[k])
    if vmin >= -GAP_TOL * scale:
        return DriftCheck(True, None, vmin)
    return DriftCheck(False, (float(xx.flat[k]), float(yy.flat[k])), vmin)


# ---------------------------------------------------------------- regimes


class Clause(enum.Enum):
    C_ge_1 = "C_ge_1"
    RhoPositive = "RhoPositive"
    C_gt_AbsRho = "C_gt_AbsRho"
    DyadicBetaException = "DyadicBetaException"
    Rejected = "Rejected"


@dataclass(frozen=True)
class RegimeVerdict:
    admissible: bool
    clause: Clause
    note: str


def is_dyadic_beta(beta: float, tol: float = 1e-12) -> bool:
    """beta in {0} or beta = (2m-1)/(2m), i.e. 1/(1-beta) is an even integer."""
    if beta == 0.0:
        return True
    if beta >= 1.0:
        return False
    k = 1.0 / (1.0 - beta)
    m = round(k / 2)
    return m >= 1 and abs(k - 2 * m) <= tol * k


def regime_verdict(c: float, n: int, p: ModelParams) -> RegimeVerdict:
    """Whether P_n(r_c) yields a generalised Feller setting for SABR."""
    if c < 0 or n < 0:
        raise ConfigError("need c >= 0 and n >= 0")
    if p.beta >= 1.0:
        return RegimeVerdict(False, Clause.Rejected, "beta = 1 is outside the radial family")
    if c >= 1:
        return RegimeVerdict(True, Clause.C_ge_1, "c >= 1 admits every (rho, beta)")
    if p.rho > 0:
        return RegimeVerdict(True, Clause.RhoPositive, "0 <= c < 1 with rho > 0")
    if c > abs(p.rho):
        return RegimeVerdict(True, Clause.C_gt_AbsRho, "rho <= 0 with c > |rho|")
    if p.rho < 0 and is_dyadic_beta(p.beta):
        return RegimeVerdict(True, Clause.DyadicBetaException, "c <= |rho|, rho < 0, 1/(1-beta) even")
    return RegimeVerdict(False, Clause.Rejected, "reference point not realisable in the open quadrant")


def reference_point(c: float, p: ModelParams):
    """(X, Y) = (((1-b)(c+rho))^(1/(1-b)), 1), real whenever it is defined."""
    base = (1 - p.beta) * (c + p.rho)
    k = 1.0 / (1 - p.beta)
    if base < 0:
        if not is_dyadic_beta(p.beta):
            raise DomainError("reference point is not real for this beta")
        return abs(base) ** k, 1.0
    return base**k, 1.0


def min_legendre_order(beta: float) -> int:
    """Smallest n >= 1 with beta <= (2n-1)/(2n)."""
    if not 0 <= beta < 1:
        raise ConfigError("beta must lie in [0, 1)")
    n = max(1, int(np.ceil(1.0 / (2.0 * (1.0 - beta)))))
    while n > 1 and beta <= (2 * (n - 1) - 1) / (2 * (n - 1)):
        n -= 1
    while beta > (2 * n - 1) / (2 * n):
        n += 1
    return n


# -------------------------------------------------------------- sublevels


@dataclass(frozen=True)
class SublevelBox:
    x: tuple
    y: tuple


def weight_values(w: WeightSpec, x, y):
    if w.kind is WeightKind.AdHoc:
        return adhoc_weight(w.params, x, y)
    return legendre_derivatives(w.n, radial_cosh(w.params, w.c, x, y))[0]


def sublevel_probe(w: WeightSpec, R: float, decades: int = 12, per_decade: int = 8):
    """Bracket {psi <= R} inside a compact box of the state space x >= 0, y > 0.

    Scans a logarithmic grid (plus the edge x = 0) spanning ``decades`` on
    each side of 1. Returns None for an empty set and a SublevelBox
    otherwise; raises CoercivityError when the set reaches the edge of the
    scan toward y -> 0, y -> inf or x -> inf.
    """
    if R <= 0:
        raise ConfigError("level R must be positive")
    ticks = np.logspace(-decades, decades, 2 * decades * per_decade + 1)
    xs = np.concatenate([[0.0], ticks])
    xx, yy = np.meshgrid(xs, ticks, indexing="ij")
    with np.errstate(over="ignore", invalid="ignore"):
        vals = weight_values(w, xx, yy)
    inside = vals <= R
    if not inside.any():
        return None
    ix = np.nonzero(inside.any(axis=1))[0]
    iy = np.nonzero(inside.any(axis=0))[0]
    edges = []
    if iy[0] == 0:
        edges.append("y -> 0")
    if iy[-1] == len(ticks) - 1:
        edges.append("y -> inf")
    if ix[-1] == len(xs) - 1:
        edges.append("x -> inf")
    if edges:
        i, j = np.argwhere(inside)[np.argmin(yy[inside]) if "y -> 0" in edges else 0]
        raise CoercivityError(
            f"sublevel set {{psi <= {R}}} reaches the scan edge ({', '.join(edges)}); "
            f"e.g. psi({xx[i, j]:.3g}, {yy[i, j]:.3g}) = {vals[i, j]:.3g}"
        )
    x_lo = xs[max(ix[0] - 1, 0)]
    return SublevelBox((float(x_lo), float(xs[ix[-1] + 1])), (float(ticks[iy[0] - 1]), float(ticks[iy[-1] + 1])))


# ------------------------------------------------------------------ audit


def log_grid(lo: float, hi: float, n: int):
    return np.logspace(np.log10(lo), np.log10(hi), n)


def subeigen_audit(p: ModelParams, n: int = 100, lo: float = 1e-3, hi: float = 1e3, max_violations: int = 20) -> dict:
    """Evaluate the ad hoc gap on an n x n log grid and summarise."""
    g = log_grid(lo, hi, n)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    gap = adhoc_subeigen_gap(p, xx, yy)
    bad = np.argwhere(gap < -GAP_TOL)
    violations = [
        {"x": float(xx[i, j]), "y": float(yy[i, j]), "gap": float(gap[i, j])} for i, j in bad[:max_violations]
    ]
    return {
        "weight": "AdHoc",
        "params": p.as_dict(),
        "grid": {"lo": lo, "hi": hi, "n": n, "spacing": "log"},
        "min_gap": float(gap.min()),
        "violations": violations,
    }
