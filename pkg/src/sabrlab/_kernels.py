"""Compiled per-path stepping loops.

Each kernel consumes standard normals from a numpy Generator in a fixed
order (two draws per step for planar models, one for scalar ones), so a
path is a pure function of its substream.
"""
import math

import numba as nb
import numpy as np

_opts = dict(nogil=True, cache=True)


@nb.njit(**_opts)
def _xpow(x, b):
    if b == 0.0:
        return 1.0
    if x <= 0.0:
        return 0.0
    return x**b


@nb.njit(**_opts)
def sabr_euler(rng, x0, y0, beta, rho, nu, dt, n_steps, mode, out_x, out_y):
    """Euler in x, exact log-step in y.

    mode 0: driftless SABR; 1: SABR with the Laplace-Beltrami drift in x;
    2: SABR with the Dirichlet-representation drift in y.
    Returns the index of the absorbing step, or -1.
    """
    rhobar = math.sqrt(1.0 - rho * rho)
    sq = math.sqrt(dt)
    x, y = x0, y0
    out_x[0], out_y[0] = x, y
    hit = -1
    if x <= 0.0:
        x = 0.0
        hit = 0
    for k in range(n_steps):
        n1 = rng.standard_normal()
        n2 = rng.standard_normal()
        dz = sq * (rho * n1 + rhobar * n2)
        ylog = nu * dz - 0.5 * nu * nu * dt
        if hit < 0:
            xb = _xpow(x, beta)
            drift = 0.0
            if mode == 1 and beta > 0.0:
                drift = 0.5 * beta * y * y * _xpow(x, 2.0 * beta - 1.0) if x > 0.0 else 0.0
            elif mode == 2 and beta > 0.0 and rho != 0.0:
                ylog -= 0.5 * rho * nu * beta * y * x ** (beta - 1.0) * dt
            xn = x + drift * dt + y * xb * sq * n1
            if xn <= 0.0:
                xn = 0.0
                hit = k + 1
            x = xn
        y = y * math.exp(ylog)
        out_x[k + 1] = x
        out_y[k + 1] = y
    return hit


@nb.njit(**_opts)
def decoupled_chunk(rng, state, beta, rho, nu, ds, n_max, mode, stop_clock, out_x, out_y, out_tau):
    """Advance the decoupled pair by up to ``n_max`` steps.

    ``state`` = [x, y, w, tau, absorbed, x0], updated in place; ``w`` is the
    accumulated x-driver and ``tau`` the running integral of y^-2.
    mode 0: Euler driftless; 1: Euler with drift; 2: explicit map with drift.
    Writes the new nodes into out_* starting at index 0 and returns
    (steps written, status) with status 0 = buffer full, 1 = y reached 0
    (the non-positive node is not written), 2 = clock target reached.
    """
    rhobar = math.sqrt(1.0 - rho * rho)
    sq = math.sqrt(ds)
    x, y, w, tau, absorbed, x0 = state[0], state[1], state[2], state[3], state[4], state[5]
    one_m = 1.0 - beta
    for k in range(n_max):
        n1 = rng.standard_normal()
        n2 = rng.standard_normal()
        dw = sq * n1
        yn = y + nu * sq * (rho * n1 + rhobar * n2)
        w += dw
        if absorbed == 0.0:
            if mode == 2:
                inner = x0**one_m + one_m * w
                if inner <= 0.0:
                    x = 0.0
                    absorbed = 1.0
                else:
                    x = inner ** (1.0 / one_m)
            else:
                drift = 0.0
                if mode == 1 and beta > 0.0:
                    drift = 0.5 * beta * _xpow(x, 2.0 * beta - 1.0)
                xn = x + drift * ds + _xpow(x, beta) * dw
                if xn <= 0.0:
                    xn = 0.0
                    absorbed = 1.0
                x = xn
        if yn <= 0.0:
            state[0], state[1], state[2], state[3], state[4] = x, yn, w, tau, absorbed
            return k, 1
        tau += 0.5 * ds * (1.0 / (y * y) + 1.0 / (yn * yn))
        y = yn
        out_x[k], out_y[k], out_tau[k] = x, y, tau
        if tau >= stop_clock:
            state[0], state[1], state[2], state[3], state[4] = x, y, w, tau, absorbed
            return k + 1, 2
    state[0], state[1], state[2], state[3], state[4] = x, y, w, tau, absorbed
    return n_max, 0


@nb.njit(**_opts)
def cev_euler(rng, x0, beta, sigma, dt, n_steps, out_x):
    """Euler for dX = sigma X^beta dW absorbed at 0; returns absorbing index or -1."""
    sq = math.sqrt(dt)
    x = x0
    out_x[0] = x
    hit = -1
    for k in range(n_steps):
        n1 = rng.standard_normal()
        if hit < 0:
            xn = x + sigma * _xpow(x, beta) * sq * n1
            if xn <= 0.0:
                xn = 0.0
                hit = k + 1
            x = xn
        out_x[k + 1] = x
    return hit


@nb.njit(**_opts)
def cev_hit(rng, x0, beta, sigma, dt, t_max):
    """Interpolated first time the CEV Euler chain reaches 0, or -1 before t_max."""
    if x0 <= 0.0:
        return 0.0
    sq = math.sqrt(dt)
    x = x0
    t = 0.0
    while t < t_max:
        n1 = rng.standard_normal()
        xn = x + sigma * _xpow(x, beta) * sq * n1
        if xn <= 0.0:
            return t + dt * x / (x - xn)
        x = xn
        t += dt
    return -1.0


@nb.njit(**_opts)
def gbm_exact(rng, y0, nu, dt, n_steps, out_y):
    sq = math.sqrt(dt)
    y = y0
    out_y[0] = y
    for k in range(n_steps):
        y = y * math.exp(nu * sq * rng.standard_normal() - 0.5 * nu * nu * dt)
        out_y[k + 1] = y


def warmup():
    """Compile all kernels once (results are cached on disk)."""
    rng = np.random.default_rng(0)
    buf = np.empty(3)
    sabr_euler(rng, 1.0, 1.0, 0.5, 0.0, 1.0, 0.1, 2, 0, buf, buf.copy())
    decoupled_chunk(rng, np.array([1.0, 1.0, 0.0, 0.0, 0.0, 1.0]), 0.5, 0.0, 1.0, 0.1, 2, 0, 1.0, buf, buf.copy(), buf.copy())
    cev_euler(rng, 1.0, 0.5, 1.0, 0.1, 2, buf)
    cev_hit(rng, 1.0, 0.5, 1.0, 0.1, 0.2)
    gbm_exact(rng, 1.0, 1.0, 0.1, 2, buf)
