"""Riemannian geometry of the SABR plane and of the CEV line.

The SABR metric is the inverse of the diffusion matrix at nu = 1,

    g = 1 / (rhobar^2 x^{2b} y^2) [[1, -rho x^b], [-rho x^b, x^{2b}]],

and ``sabr_isometry`` maps it onto the Poincare half-plane (du^2 + dv^2)/v^2.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError, DomainError
from .process_models import ModelParams, xpow


def _primitive(x, beta: float):
    """Antiderivative of x^(-beta): x^(1-b)/(1-b), or log x when b == 1."""
    x = np.asarray(x, dtype=float)
    if beta == 1.0:
        with np.errstate(divide="ignore"):
            return np.log(x)
    return xpow(x, 1.0 - beta) / (1.0 - beta)


def sabr_isometry(p: ModelParams, x, y):
    """Map (x, y) to half-plane coordinates (u, v)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(y <= 0):
        raise DomainError("isometry needs x >= 0 and y > 0")
    rb = p.rhobar
    return _primitive(x, p.beta) / rb - p.rho * y / rb, y


def hyperbolic_cosh_distance(u1, v1, u2, v2):
    """cosh of the half-plane distance between (u1, v1) and (u2, v2)."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if np.any(v1 <= 0) or np.any(v2 <= 0):
        raise DomainError("half-plane points need v > 0")
    return 1.0 + ((np.asarray(u1) - u2) ** 2 + (v1 - v2) ** 2) / (2.0 * v1 * v2)


def hyperbolic_distance(u1, v1, u2, v2):
    return np.arccosh(np.maximum(hyperbolic_cosh_distance(u1, v1, u2, v2), 1.0))


def sabr_cosh_distance(p: ModelParams, z1, z2):
    """cosh of the SABR distance between z1 = (x1, y1) and z2 = (x2, y2)."""
    u1, v1 = sabr_isometry(p, *z1)
    u2, v2 = sabr_isometry(p, *z2)
    return hyperbolic_cosh_distance(u1, v1, u2, v2)


def sabr_distance(p: ModelParams, z1, z2):
    return np.arccosh(np.maximum(sabr_cosh_distance(p, z1, z2), 1.0))


def metric_tensor(p: ModelParams, x, y):
    """Metric g as an array of shape (..., 2, 2)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("metric is defined on the open quadrant")
    xb = xpow(x, p.beta)
    scale = 1.0 / (p.rhobar**2 * xb * xb * y * y)
    g = np.empty(np.broadcast(x, y).shape + (2, 2))
    g[..., 0, 0] = scale
    g[..., 0, 1] = g[..., 1, 0] = -p.rho * xb * scale
    g[..., 1, 1] = xb * xb * scale
    return g


def volume_density(p: ModelParams, x, y):
    """Riemannian volume density sqrt(det g) = 1 / (rhobar x^b y^2)."""
    return 1.0 / (p.rhobar * xpow(x, p.beta) * np.asarray(y, dtype=float) ** 2)


def cev_riemannian_distance(beta: float, x1, x2, sigma: float = 1.0):
    """Distance for the metric dx^2 / (sigma^2 x^{2b}).

    Finite up to the boundary point 0 for b < 1; for b = 1 the boundary is
    at infinite distance and ``inf`` is returned for pairs involving 0.
    """
    if not 0.0 <= beta <= 1.0:
        raise ConfigError("beta must lie in [0, 1]")
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if np.any(x1 < 0) or np.any(x2 < 0):
        raise DomainError("CEV distance needs x >= 0")
    with np.errstate(invalid="ignore"):
        d = np.abs(_primitive(x1, beta) - _primitive(x2, beta)) / sigma
    if beta == 1.0:
        d = np.where((x1 == 0) & (x2 == 0), 0.0, d)
    return d


def legendre_eval(n: int, r):
    """Legendre polynomial P_n(r) by the three-term recurrence."""
    return legendre_with_derivative(n, r)[0]


def legendre_with_derivative(n: int, r):
    """(P_n(r), P_n'(r)) by the three-term recurrence."""
    return legendre_derivatives(n, r)[:2]


def legendre_derivatives(n: int, r):
    """(P_n, P_n', P_n'') at r.

    Uses (k+1) P_{k+1} = (2k+1) r P_k - k P_{k-1} together with its
    differentiated forms P'_{k+1} = P'_{k-1} + (2k+1) P_k and
    P''_{k+1} = P''_{k-1} + (2k+1) P'_k.
    """
    if n < 0 or int(n) != n:
        raise ConfigError(f"Legendre order must be a non-negative integer, got {n}")
    r = np.asarray(r, dtype=float)
    p_prev, p = np.ones_like(r), r.copy()
    d_prev, d = np.zeros_like(r), np.ones_like(r)
    s_prev, s = np.zeros_like(r), np.zeros_like(r)
    if n == 0:
        return p_prev, d_prev, s_prev
    for k in range(1, n):
        p_next = ((2 * k + 1) * r * p - k * p_prev) / (k + 1)
        d_next = d_prev + (2 * k + 1) * p
        s_next = s_prev + (2 * k + 1) * d
        p_prev, p = p, p_next
        d_prev, d = d, d_next
        s_prev, s = s, s_next
    return p, d, s
