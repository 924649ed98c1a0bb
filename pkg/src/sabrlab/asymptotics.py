"""Long-time behaviour: absorption at zero, total clock, boundary class.

In decoupled time the forward x~ and the volatility y~ race to zero; the
SABR forward survives forever exactly when y~ reaches zero first. For the
driftless model with rho = 0 this is a race between two independent times:
the total clock Lambda = int_0^inf Y^2 dt (equal in law to y0^2 / (nu^2 N^2))
and the CEV absorption time (equal in law to x0^{2(1-b)} / (2 (1-b)^2 G) with
G ~ Gamma(1 / (2 (1-b)))).
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, special, stats

from .errors import ConfigError
from .process_models import ModelParams, State2
from .simulation import (
    Path,
    SeedSpec,
    TimeGrid,
    cev_hitting_time,
    first_hitting_time,
    map_paths,
    simulate_decoupled,
    simulate_gbm,
    simulate_sabr_euler,
)
from .time_change import Integrand, clock

TAIL_SHARE = 0.1
TAIL_MASS = 1e-3


class Case(enum.Enum):
    Case1 = "Case1"  # x~ reaches zero first: absorbed
    Case2 = "Case2"  # y~ reaches zero first: the forward stays positive
    Case3 = "Case3"  # simultaneous within one grid step
    Undecided = "Undecided"


# ----------------------------------------------------------------- clock


@dataclass(frozen=True)
class ClockEstimate:
    value: float
    converged: bool
    horizon: float


def total_clock(p: ModelParams, y0: float, horizon: float, dt: float, seed: SeedSpec) -> ClockEstimate:
    """Trapezoid estimate of int_0^horizon Y^2 dt along an exact GBM path.

    Converged when the last 10% of the horizon contributes less than 0.1% of
    the total.
    """
    if p.nu == 0:
        raise ConfigError("the total clock diverges for nu = 0")
    path = simulate_gbm(y0, p.nu, TimeGrid.from_step(horizon, dt), seed)
    af = clock(path, Integrand.y_squared)
    total = af.values[-1]
    k = int(round((1 - TAIL_SHARE) * (len(af.values) - 1)))
    return ClockEstimate(float(total), bool(total - af.values[k] < TAIL_MASS * total), horizon)


def total_clock_adaptive(p, y0, dt, seed, horizon0: float = 50.0, horizon_max: float = 1600.0) -> ClockEstimate:
    """Double the horizon until ``total_clock`` converges or ``horizon_max`` is reached."""
    h = horizon0
    while True:
        est = total_clock(p, y0, h, dt, seed)
        if est.converged or h >= horizon_max:
            return est
        h *= 2


def total_clock_cdf(l, y0: float, nu: float):
    """P(Lambda <= l) for Lambda = y0^2 / (nu^2 N^2)."""
    l = np.asarray(l, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(l > 0, 2.0 * stats.norm.sf(y0 / (nu * np.sqrt(np.maximum(l, 1e-300)))), 0.0)


def cev_hitting_cdf(t, x0: float, beta: float, sigma: float = 1.0):
    """P(T_0 <= t) for dX = sigma X^b dW started at x0 (b < 1)."""
    if beta >= 1:
        raise ConfigError("CEV with beta = 1 never reaches zero")
    t = np.asarray(t, dtype=float)
    k = 1.0 / (2.0 * (1.0 - beta))
    r2 = x0 ** (2 * (1 - beta)) / (1 - beta) ** 2
    with np.errstate(divide="ignore"):
        return np.where(t > 0, special.gammaincc(k, r2 / (2 * sigma**2 * np.maximum(t, 1e-300))), 0.0)


def race_survival_probability(beta: float, nu: float, x0: float, y0: float, sigma: float = 1.0) -> float:
    """P(Lambda < T_0) for independent total clock and CEV absorption time."""
    k = 1.0 / (2.0 * (1.0 - beta))
    r2 = x0 ** (2 * (1 - beta)) / (1 - beta) ** 2
    # T_0 = r2 / (2 sigma^2 G); Lambda < T_0  <=>  N^2 > 2 sigma^2 y0^2 G / (nu^2 r2)
    c = 2 * sigma**2 * y0**2 / (nu**2 * r2)

    def integrand(g):
        return 2.0 * stats.norm.sf(np.sqrt(c * g)) * stats.gamma.pdf(g, k)

    val, _ = integrate.quad(integrand, 0, np.inf, limit=200)
    return float(val)


def drifted_survival_probability(p: ModelParams, x0: float, y0: float) -> float:
    """P(forward never absorbed) for the drifted model (b < 1).

    In decoupled time x~ is a function of W that vanishes when W reaches
    -x0^(1-b) / (1-b), and y~ = y0 + nu Z vanishes when Z reaches -y0/nu.
    The first exit of the correlated pair (W, Z) from this quadrant is a
    planar Brownian exit from a wedge of angle pi/2 + arcsin(rho), whose
    harmonic measure is linear in the polar angle.
    """
    if p.beta >= 1:
        raise ConfigError("explicit survival probability needs beta < 1")
    a = x0 ** (1 - p.beta) / ((1 - p.beta) * p.sigma)
    b = y0 / p.nu
    rb = p.rhobar
    phi0 = np.arcsin(p.rho)
    start = np.arctan2((b - p.rho * a) / rb, a)
    return float((np.pi / 2 - start) / (np.pi / 2 + phi0))


# ------------------------------------------------------------ decomposition


def case_from_times(tx: Optional[float], ty: Optional[float], step: float) -> Case:
    if tx is None and ty is None:
        return Case.Undecided
    if tx is not None and ty is not None and abs(tx - ty) < step:
        return Case.Case3
    if ty is None or (tx is not None and tx < ty):
        return Case.Case1
    return Case.Case2


def _y_zero_time(path: Path) -> Optional[float]:
    if path.exit_time is not None:
        return path.exit_time
    if path.y is not None:
        return first_hitting_time(path, 0.0, "y")
    return first_hitting_time(path, 0.0, "x")


def case_decomposition(x_path: Path, y_path: Path) -> Case:
    """Which of x~ and y~ reaches zero first (Case3: within one grid step)."""
    tx = first_hitting_time(x_path, 0.0, "x")
    ty = _y_zero_time(y_path)
    step = float(x_path.times[1] - x_path.times[0])
    return case_from_times(tx, ty, step)


# --------------------------------------------------------------- estimates


def wilson_interval(k: int, n: int, level: float = 0.95):
    ci = stats.binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class AbsorptionReport:
    params: dict
    n: int
    p_hat: float
    ci: tuple
    tail_fraction: float
    case_counts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "params": self.params,
            "n": self.n,
            "p_hat": self.p_hat,
            "ci": list(self.ci),
            "tail_fraction": self.tail_fraction,
            "case_counts": self.case_counts,
        }


def absorption_probability(
    p: ModelParams,
    x0: float,
    y0: float,
    n: int,
    seed: int,
    drifted: bool = False,
    method: Optional[str] = None,
    dt: float = 1e-3,
    clock_dt: float = 1e-2,
    horizon: float = 1e3,
) -> AbsorptionReport:
    """Estimate P(forward stays positive forever) with a Wilson interval.

    ``method="race"`` (driftless, rho = 0) races an independent total clock
    against a CEV absorption time. ``method="joint"`` simulates the
    correlated decoupled pair until one component reaches zero. Paths with
    no decision by ``horizon`` are reported in ``tail_fraction`` and
    excluded from ``p_hat``.
    """
    if method is None:
        method = "race" if (not drifted and p.rho == 0) else "joint"
    if method == "race" and (drifted or p.rho != 0):
        raise ConfigError("the independent race needs the driftless model with rho = 0")
    if p.nu == 0:
        raise ConfigError("absorption analysis needs nu > 0")

    if method == "race":

        def one(i):
            lam = total_clock_adaptive(p, y0, clock_dt, SeedSpec(seed, i, 2))
            t_hit = cev_hitting_time(x0, p.beta, p.sigma, dt, min(lam.value, horizon), SeedSpec(seed, i, 3))
            if t_hit is not None:
                return Case.Case1 if abs(t_hit - lam.value) >= dt else Case.Case3
            return Case.Case2 if (lam.converged and lam.value <= horizon) else Case.Undecided

    elif method == "joint":
        grid = TimeGrid.from_step(horizon, dt)
        init = State2(x0, y0)

        def one(i):
            path = simulate_decoupled(p, init, grid, SeedSpec(seed, i, 4), drifted=drifted)
            return case_from_times(path.absorption_time, path.exit_time, dt)

    else:
        raise ConfigError(f"unknown method {method!r}")

    cases = map_paths(one, n)
    counts = {c.value: sum(1 for v in cases if v is c) for c in Case}
    decided = n - counts["Undecided"]
    positive = counts["Case2"]
    p_hat = positive / decided if decided else float("nan")
    ci = wilson_interval(positive, decided) if decided else (0.0, 1.0)
    params = dict(p.as_dict(), x0=x0, y0=y0, drifted=drifted, method=method, dt=dt, horizon=horizon, seed=seed)
    return AbsorptionReport(params, n, p_hat, ci, counts["Undecided"] / n, counts)


@dataclass(frozen=True)
class MassAtZero:
    fraction: float
    ci: tuple
    n: int


def mass_at_zero(p: ModelParams, x0: float, y0: float, T: float, dt: float, n: int, seed: int) -> MassAtZero:
    """Fraction of SABR Euler paths absorbed by time T, with a Wilson interval."""
    if T == 0:
        k = n if x0 == 0 else 0
        return MassAtZero(k / n, wilson_interval(k, n), n)
    grid = TimeGrid.from_step(T, dt)
    init = State2(x0, y0)
    hits = map_paths(lambda i: bool(simulate_sabr_euler(p, init, grid, SeedSpec(seed, i)).absorbed[-1]), n)
    k = int(sum(hits))
    return MassAtZero(k / n, wilson_interval(k, n), n)


# ------------------------------------------------------------------ Feller


class BoundaryKind(enum.Enum):
    NotEntrance = "NotEntrance"
    Entrance = "Entrance"


@dataclass(frozen=True)
class BoundaryVerdict:
    kind: BoundaryKind
    integral: float


def feller_boundary_class(beta: float) -> BoundaryVerdict:
    """Feller test at infinity for the CEV scale: int_1^inf x^(1-2b) dx.

    Divergent (not an entrance boundary) for b <= 1; for b > 1 the integral
    equals 1 / (2b - 2).
    """
    if not np.isfinite(beta) or beta < 0:
        raise ConfigError("beta must be a finite non-negative number")
    if beta <= 1:
        return BoundaryVerdict(BoundaryKind.NotEntrance, float("inf"))
    return BoundaryVerdict(BoundaryKind.Entrance, 1.0 / (2.0 * beta - 2.0))
