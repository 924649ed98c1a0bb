"""Monte Carlo paths for SABR, its decoupled time-changed pair, CEV and GBM.

Randomness: every path owns a substream derived from
``SeedSequence(master_seed, spawn_key=(stream, path_index))``, so results do
not depend on how paths are scheduled across threads.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .errors import ConfigError, DomainError
from .process_models import ModelParams, State2

CHUNK = 1 << 15


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    horizon: float
    n_steps: int

    def __post_init__(self):
        if not (self.horizon > self.t0 and self.n_steps >= 1):
            raise ConfigError(f"invalid grid {self}")

    @classmethod
    def from_step(cls, horizon: float, dt: float, t0: float = 0.0) -> "TimeGrid":
        return cls(t0, horizon, int(round((horizon - t0) / dt)))

    @property
    def dt(self) -> float:
        return (self.horizon - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def truncated(self, k: int) -> "TimeGrid":
        """The first ``k`` steps of this grid (same spacing)."""
        return TimeGrid(self.t0, self.t0 + k * self.dt, k)


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    path_index: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream, self.path_index))
        return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class Path:
    """A sampled trajectory on a uniform grid.

    ``y`` is None for scalar models. ``times`` may be shorter than the
    requested grid when the path was stopped early (``stop_reason``).
    """

    times: np.ndarray
    x: np.ndarray
    y: Optional[np.ndarray]
    absorbed: np.ndarray
    absorption_time: Optional[float] = None
    stop_reason: Optional[str] = None
    exit_time: Optional[float] = None
    inverse_square_clock: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.times)

    def state(self, i: int) -> State2:
        return State2(float(self.x[i]), float(self.y[i]), bool(self.absorbed[i]))

    @property
    def terminal(self) -> State2:
        return self.state(-1)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("SABRLAB_THREADS", "1")))
    except ValueError as exc:
        raise ConfigError("SABRLAB_THREADS must be an integer") from exc


def map_paths(fn: Callable[[int], object], n_paths: int) -> list:
    """``[fn(i) for i in range(n_paths)]``, threaded up to SABRLAB_THREADS."""
    n = _threads()
    if n == 1 or n_paths < 2:
        return [fn(i) for i in range(n_paths)]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, range(n_paths), chunksize=max(1, n_paths // (8 * n))))


def _check_init(init: State2):
    if init.y <= 0:
        raise DomainError("initial volatility must be positive")


def _absorption(times, hit):
    absorbed = np.zeros(len(times), dtype=bool)
    if hit >= 0:
        absorbed[hit:] = True
        return absorbed, float(times[hit])
    return absorbed, None


def simulate_sabr_euler(p: ModelParams, init: State2, grid: TimeGrid, seed: SeedSpec, drifted: bool = False) -> Path:
    """SABR path: y stepped exactly as geometric Brownian motion, x by Euler.

    x is clamped at 0 at the first crossing and stays there. With
    ``drifted`` the x-equation carries the drift (b/2) y^2 x^(2b-1).
    """
    _check_init(init)
    return _sabr_path(p, init, grid, seed, 1 if drifted else 0)


def simulate_dirichlet_representation(p: ModelParams, init: State2, grid: TimeGrid, seed: SeedSpec) -> Path:
    """SABR with the extra volatility drift -(rho nu b / 2) y^2 x^(b-1).

    The y-equation is stepped in log form; for rho = 0 this reproduces
    ``simulate_sabr_euler`` path by path.
    """
    _check_init(init)
    return _sabr_path(p, init, grid, seed, 2)


def _sabr_path(p, init, grid, seed, mode):
    n = grid.n_steps
    xs, ys = np.empty(n + 1), np.empty(n + 1)
    hit = K.sabr_euler(seed.generator(), float(init.x), float(init.y), p.beta, p.rho, p.nu, grid.dt, n, mode, xs, ys)
    times = grid.times
    absorbed, t_abs = _absorption(times, hit)
    return Path(times, xs, ys, absorbed, t_abs)


def simulate_decoupled(
    p: ModelParams,
    init: State2,
    grid: TimeGrid,
    seed: SeedSpec,
    drifted: bool = False,
    scheme: str = "exact",
    stop_clock: Optional[float] = None,
) -> Path:
    """The pair dX = X^b dW (+ (b/2) X^(2b-1) ds), dY = nu dZ in decoupled time.

    y is Brownian and exact; x is Euler, or the explicit Stratonovich map when
    ``drifted`` and ``scheme == "exact"`` (beta < 1). The path stops at the
    first node where y <= 0 (``exit_time`` is then the interpolated hitting
    time), when the running integral of y^-2 reaches ``stop_clock``, or at
    the grid horizon, whichever comes first. The running trapezoid integral
    of y^-2 is kept in ``inverse_square_clock``.
    """
    _check_init(init)
    if scheme not in ("exact", "euler"):
        raise ConfigError(f"unknown scheme {scheme!r}")
    mode = 0
    if drifted:
        mode = 2 if (scheme == "exact" and p.beta < 1.0) else 1
    rng = seed.generator()
    ds = grid.dt
    state = np.array([init.x, init.y, 0.0, 0.0, 1.0 if init.x <= 0 else 0.0, init.x])
    target = np.inf if stop_clock is None else float(stop_clock)
    xs, ys, taus = [np.array([init.x])], [np.array([init.y])], [np.array([0.0])]
    remaining = grid.n_steps
    status = 0
    while remaining > 0:
        m = min(CHUNK, remaining)
        bx, by, bt = np.empty(m), np.empty(m), np.empty(m)
        done, status = K.decoupled_chunk(rng, state, p.beta, p.rho, p.nu, ds, m, mode, target, bx, by, bt)
        xs.append(bx[:done])
        ys.append(by[:done])
        taus.append(bt[:done])
        remaining -= m
        if status:
            break
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    times = grid.t0 + ds * np.arange(len(x))
    zero = np.nonzero(x <= 0)[0]
    absorbed = np.zeros(len(x), dtype=bool)
    t_abs = None
    if len(zero):
        absorbed[zero[0]:] = True
        t_abs = float(times[zero[0]])
    reason, exit_time = {0: (None, None), 2: ("clock", None)}.get(status, ("y_zero", None))
    if status == 1:
        y_last, y_next = y[-1], state[1]
        exit_time = float(times[-1] + ds * y_last / (y_last - y_next))
    return Path(times, x, y, absorbed, t_abs, reason, exit_time, np.concatenate(taus))


def simulate_cev(x0: float, beta: float, sigma: float, grid: TimeGrid, seed: SeedSpec) -> Path:
    """Euler path of dX = sigma X^b dW absorbed at 0."""
    if x0 < 0:
        raise DomainError("x0 must be >= 0")
    xs = np.empty(grid.n_steps + 1)
    hit = K.cev_euler(seed.generator(), float(x0), beta, sigma, grid.dt, grid.n_steps, xs)
    times = grid.times
    absorbed, t_abs = _absorption(times, hit)
    return Path(times, xs, None, absorbed, t_abs)


def cev_hitting_time(x0: float, beta: float, sigma: float, dt: float, t_max: float, seed: SeedSpec) -> Optional[float]:
    """First (interpolated) time the CEV Euler chain hits 0, or None if after t_max."""
    t = K.cev_hit(seed.generator(), float(x0), beta, sigma, dt, t_max)
    return None if t < 0 else float(t)


def simulate_gbm(y0: float, nu: float, grid: TimeGrid, seed: SeedSpec) -> Path:
    """Exact geometric Brownian motion dY = nu Y dZ sampled on the grid (stored in ``y``)."""
    if y0 <= 0:
        raise DomainError("y0 must be positive")
    ys = np.empty(grid.n_steps + 1)
    K.gbm_exact(seed.generator(), float(y0), nu, grid.dt, grid.n_steps, ys)
    n = len(ys)
    return Path(grid.times, np.zeros(n), ys, np.zeros(n, dtype=bool))


def first_hitting_time(path: Path, level: float = 0.0, component: str = "x") -> Optional[float]:
    """First time the component is <= level, interpolated between grid nodes."""
    v = path.x if component == "x" else path.y
    if v is None:
        raise ConfigError(f"path has no component {component!r}")
    idx = np.nonzero(v <= level)[0]
    if not len(idx):
        return None
    k = int(idx[0])
    t = path.times
    if k == 0:
        return float(t[0])
    a, b = v[k - 1], v[k]
    return float(t[k - 1] + (t[k] - t[k - 1]) * (a - level) / (a - b))


def terminal_states(simulate: Callable[[SeedSpec], Path], n_paths: int, master_seed: int, stream: int = 0):
    """Run ``simulate`` for paths 0..n-1 and stack (x_T, y_T, absorbed_T)."""

    def one(i):
        path = simulate(SeedSpec(master_seed, i, stream))
        return path.x[-1], (path.y[-1] if path.y is not None else np.nan), path.absorbed[-1]

    rows = map_paths(one, n_paths)
    arr = np.array([(a, b, float(c)) for a, b, c in rows])
    return arr[:, 0], arr[:, 1], arr[:, 2].astype(bool)


def write_paths_csv(paths, fh, every: int = 1):
    """Long-format export: path_id,t,x,y,absorbed."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["path_id", "t", "x", "y", "absorbed"])
    for pid, path in enumerate(paths):
        ys = path.y if path.y is not None else np.full(len(path), np.nan)
        for k in range(0, len(path), every):
            w.writerow([pid, repr(float(path.times[k])), repr(float(path.x[k])), repr(float(ys[k])), int(path.absorbed[k])])
