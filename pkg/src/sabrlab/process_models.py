"""SABR parameters, coefficients and second-order generators.

All generators are normalised as Markov generators, i.e. they carry the
factor 1/2 in front of the second-order part:

    SabrA                   1/2 y^2 (x^{2b} f_xx + 2 rho nu x^b f_xy + nu^2 f_yy)
    TimeChangedAtilde       SabrA / y^2
    LaplaceBeltrami         SabrA + (b/2) y^2 x^{2b-1} f_x
    TimeChangedLaplaceBeltrami  LaplaceBeltrami / y^2
    WeightedLaplaceBeltrami SabrA - (rho nu b/2) y^2 x^{b-1} f_y
    Cev                     1/2 sigma^2 x^{2b} f_xx

The geometric Laplace-Beltrami operator of the SABR plane (nu = 1) is twice
``LaplaceBeltrami``.

Powers follow one convention throughout: ``x**b`` at ``x == 0`` is 0 for
``b > 0`` and 1 for ``b == 0``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DomainError

FD_REL_STEP = 1e-4
FD_MARGIN = 4.0


@dataclass(frozen=True)
class ModelParams:
    beta: float
    rho: float
    nu: float = 1.0
    sigma: float = 1.0

    def __post_init__(self):
        vals = (self.beta, self.rho, self.nu, self.sigma)
        if not all(np.isfinite(v) for v in vals):
            raise ConfigError(f"non-finite parameter in {self}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError(f"beta must lie in [0, 1], got {self.beta}")
        if not -1.0 < self.rho < 1.0:
            raise ConfigError(f"rho must lie in (-1, 1), got {self.rho}")
        if self.nu < 0.0:
            raise ConfigError(f"nu must be >= 0, got {self.nu}")
        if self.sigma <= 0.0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")

    @property
    def rhobar(self) -> float:
        return float(np.sqrt(1.0 - self.rho**2))

    def as_dict(self) -> dict:
        return {"beta": self.beta, "rho": self.rho, "nu": self.nu, "sigma": self.sigma}


@dataclass(frozen=True)
class State2:
    x: float
    y: float
    absorbed: bool = False

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise DomainError(f"state outside the closed quadrant: ({self.x}, {self.y})")
        if self.absorbed and self.x != 0:
            raise DomainError("an absorbed state must have x == 0")


class GeneratorKind(enum.Enum):
    SabrA = "SabrA"
    TimeChangedAtilde = "TimeChangedAtilde"
    LaplaceBeltrami = "LaplaceBeltrami"
    TimeChangedLaplaceBeltrami = "TimeChangedLaplaceBeltrami"
    WeightedLaplaceBeltrami = "WeightedLaplaceBeltrami"
    Cev = "Cev"


@dataclass(frozen=True)
class GeneratorSpec:
    kind: GeneratorKind
    params: ModelParams


@dataclass(frozen=True)
class ScalarField:
    """A function of (x, y), vectorised over numpy arrays.

    ``grad`` returns (f_x, f_y) and ``hess`` returns (f_xx, f_xy, f_yy). When
    either is missing, derivatives are taken by central differences.
    ``support`` is an optional bounding box ((x_lo, x_hi), (y_lo, y_hi))
    outside of which the field vanishes.
    """

    value: Callable
    grad: Optional[Callable] = None
    hess: Optional[Callable] = None
    support: Optional[tuple] = None

    def __call__(self, x, y):
        return self.value(x, y)

    @property
    def analytic(self) -> bool:
        return self.grad is not None and self.hess is not None


def xpow(x, b: float):
    """``x**b`` for x >= 0 with ``0**0 == 1`` and ``0**b == 0`` for b > 0."""
    x = np.asarray(x, dtype=float)
    if b == 0.0:
        return np.ones_like(x)
    with np.errstate(divide="ignore"):
        return np.where(x > 0, np.power(np.where(x > 0, x, 1.0), b), 0.0 if b > 0 else np.inf)


def diffusion_matrix(p: ModelParams, x, y):
    """Entries (xi_xx, xi_xy, xi_yy) of the SABR diffusion matrix."""
    xb = xpow(x, p.beta)
    y2 = np.asarray(y, dtype=float) ** 2
    return y2 * xb * xb, p.rho * p.nu * y2 * xb, p.nu**2 * y2 * np.ones_like(xb)


def sabr_coefficients(p: ModelParams, s: State2, drifted: bool = False):
    """Drift vector and lower-triangular diffusion factor at ``s``.

    The diffusion factor maps independent increments (dW, dW_perp) to
    (dX, dY); its square is the diffusion matrix.
    """
    if s.absorbed:
        return np.zeros(2), np.array([[0.0, 0.0], [p.nu * s.y * p.rho, p.nu * s.y * p.rhobar]])
    xb = float(xpow(s.x, p.beta))
    drift = np.zeros(2)
    if drifted:
        if s.x == 0 and p.beta < 0.5:
            raise DomainError("drift x^(2b-1) is singular at x = 0 for beta < 1/2")
        drift[0] = 0.5 * p.beta * s.y**2 * float(xpow(s.x, 2 * p.beta - 1))
    diff = np.array([[s.y * xb, 0.0], [p.nu * s.y * p.rho, p.nu * s.y * p.rhobar]])
    return drift, diff


def fd_derivatives(f: Callable, x, y, h):
    """Central-difference (f_x, f_y, f_xx, f_xy, f_yy) with step ``h``."""
    f0 = f(x, y)
    fpx, fmx = f(x + h, y), f(x - h, y)
    fpy, fmy = f(x, y + h), f(x, y - h)
    fx = (fpx - fmx) / (2 * h)
    fy = (fpy - fmy) / (2 * h)
    fxx = (fpx - 2 * f0 + fmx) / h**2
    fyy = (fpy - 2 * f0 + fmy) / h**2
    fxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4 * h**2)
    return fx, fy, fxx, fxy, fyy


def default_step(x, y):
    return FD_REL_STEP * np.maximum(1.0, np.maximum(np.abs(x), np.abs(y)))


def _derivatives(f: ScalarField, x, y, h):
    if f.analytic and h is None:
        fx, fy = f.grad(x, y)
        fxx, fxy, fyy = f.hess(x, y)
        return fx, fy, fxx, fxy, fyy
    if h is None:
        h = default_step(x, y)
    if np.any(x <= FD_MARGIN * h) or np.any(y <= FD_MARGIN * h):
        raise DomainError("finite-difference stencil reaches the boundary of the quadrant")
    fun = f.value if isinstance(f, ScalarField) else f
    return fd_derivatives(fun, x, y, h)


def generator_terms(kind: GeneratorKind, p: ModelParams, x, y, derivs):
    """Apply the operator ``kind`` to precomputed derivatives."""
    fx, fy, fxx, fxy, fyy = derivs
    b, r, nu = p.beta, p.rho, p.nu
    xb = xpow(x, b)
    if kind is GeneratorKind.Cev:
        return 0.5 * p.sigma**2 * xb * xb * fxx
    y2 = np.asarray(y, dtype=float) ** 2
    core = 0.5 * (xb * xb * fxx + 2 * r * nu * xb * fxy + nu**2 * fyy)
    if kind is GeneratorKind.SabrA:
        return y2 * core
    if kind is GeneratorKind.TimeChangedAtilde:
        return core
    if kind in (GeneratorKind.LaplaceBeltrami, GeneratorKind.TimeChangedLaplaceBeltrami):
        first = 0.5 * b * xpow(x, 2 * b - 1) * fx if b > 0 else 0.0
        out = core + first
        return y2 * out if kind is GeneratorKind.LaplaceBeltrami else out
    if kind is GeneratorKind.WeightedLaplaceBeltrami:
        first = -0.5 * r * nu * b * xpow(x, b - 1) * fy if (b > 0 and r != 0) else 0.0
        return y2 * (core + first)
    raise ConfigError(f"unknown generator kind {kind}")


def apply_generator(g: GeneratorSpec, f, s, h: Optional[float] = None):
    """Evaluate ``g`` applied to ``f`` at ``s``.

    ``s`` is a State2 or an (x, y) pair of arrays. ``f`` is a ScalarField or a
    plain callable. Analytic derivatives are used when ``f`` provides them and
    no explicit step ``h`` is given; otherwise central differences with
    ``h = 1e-4 * max(1, |x|, |y|)`` are used.
    """
    if isinstance(s, State2):
        x, y, scalar = np.float64(s.x), np.float64(s.y), True
    else:
        x, y = (np.asarray(v, dtype=float) for v in s)
        scalar = x.ndim == 0 and y.ndim == 0
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("generator evaluated outside the open quadrant")
    if not isinstance(f, ScalarField):
        f = ScalarField(f)
    out = generator_terms(g.kind, g.params, x, y, _derivatives(f, x, y, h))
    out = np.broadcast_to(out, np.broadcast(x, y).shape) if np.ndim(out) == 0 else out
    return float(out) if scalar else np.asarray(out)


def cev_exact_stratonovich(x0: float, beta: float, sigma: float, w):
    """Explicit solution of dX = sigma X^beta o dW started at ``x0``.

    X = (x0^(1-b) + sigma (1-b) W)^(1/(1-b)) while the bracket stays
    positive, and 0 afterwards.
    """
    if beta >= 1.0:
        raise ConfigError("the explicit map requires beta < 1")
    w = np.asarray(w, dtype=float)
    inner = x0 ** (1 - beta) + sigma * (1 - beta) * w
    if w.ndim:
        alive = np.minimum.accumulate(inner) > 0
    else:
        alive = inner > 0
    return np.where(alive, np.power(np.where(alive, inner, 1.0), 1.0 / (1 - beta)), 0.0)


# ----------------------------------------------------------------- test fields


def _bump1d(u):
    inside = np.abs(u) < 1
    q = np.where(inside, 1 - u * u, 0.0)
    b = q**3
    db = -6 * u * q**2
    ddb = np.where(inside, -6 * q**2 + 24 * u * u * q, 0.0)
    return b, db, ddb


def bump_field(cx: float, cy: float, wx: float, wy: float) -> ScalarField:
    """Product bump (1 - u^2)^3 (1 - v^2)^3 with u = (x-cx)/wx, v = (y-cy)/wy."""

    def parts(x, y):
        bx, dbx, ddbx = _bump1d((np.asarray(x, dtype=float) - cx) / wx)
        by, dby, ddby = _bump1d((np.asarray(y, dtype=float) - cy) / wy)
        return bx, dbx / wx, ddbx / wx**2, by, dby / wy, ddby / wy**2

    def value(x, y):
        bx, _, _, by, _, _ = parts(x, y)
        return bx * by

    def grad(x, y):
        bx, dbx, _, by, dby, _ = parts(x, y)
        return dbx * by, bx * dby

    def hess(x, y):
        bx, dbx, ddbx, by, dby, ddby = parts(x, y)
        return ddbx * by, dbx * dby, bx * ddby

    return ScalarField(value, grad, hess, support=((cx - wx, cx + wx), (cy - wy, cy + wy)))


def product_field(f: ScalarField, g: ScalarField) -> ScalarField:
    """Pointwise product with analytic derivatives when both factors have them."""

    def value(x, y):
        return f(x, y) * g(x, y)

    support = None
    if f.support is not None and g.support is not None:
        (a0, a1), (b0, b1) = f.support
        (c0, c1), (d0, d1) = g.support
        support = ((max(a0, c0), min(a1, c1)), (max(b0, d0), min(b1, d1)))
    else:
        support = f.support or g.support
    if not (f.analytic and g.analytic):
        return ScalarField(value, support=support)

    def grad(x, y):
        fv, gv = f(x, y), g(x, y)
        (fx, fy), (gx, gy) = f.grad(x, y), g.grad(x, y)
        return fx * gv + fv * gx, fy * gv + fv * gy

    def hess(x, y):
        fv, gv = f(x, y), g(x, y)
        (fx, fy), (gx, gy) = f.grad(x, y), g.grad(x, y)
        (fxx, fxy, fyy), (gxx, gxy, gyy) = f.hess(x, y), g.hess(x, y)
        return (
            fxx * gv + 2 * fx * gx + fv * gxx,
            fxy * gv + fx * gy + fy * gx + fv * gxy,
            fyy * gv + 2 * fy * gy + fv * gyy,
        )

    return ScalarField(value, grad, hess, support=support)


def polynomial_field(coeffs: dict) -> ScalarField:
    """Polynomial sum c_(i,j) x^i y^j from a {(i, j): c} mapping."""

    def value(x, y):
        return sum(c * np.power(x, i) * np.power(y, j) for (i, j), c in coeffs.items()) + 0.0 * x * y

    def d(k, i):
        return np.prod([i - m for m in range(k)]) if k else 1.0

    def term(x, y, kx, ky):
        tot = 0.0 * np.asarray(x, dtype=float) * np.asarray(y, dtype=float)
        for (i, j), c in coeffs.items():
            if i >= kx and j >= ky:
                tot = tot + c * d(kx, i) * d(ky, j) * np.power(x, i - kx) * np.power(y, j - ky)
        return tot

    return ScalarField(
        value,
        grad=lambda x, y: (term(x, y, 1, 0), term(x, y, 0, 1)),
        hess=lambda x, y: (term(x, y, 2, 0), term(x, y, 1, 1), term(x, y, 0, 2)),
    )
