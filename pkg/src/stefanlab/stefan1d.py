"""Classical one-phase melting problem on a half line, used as a reference.

A solid held at the melting temperature 0 occupies ``x > 0``; the face
``x = 0`` is kept at ``T_L > 0``.  With unit diffusivity and latent heat
``nu`` the melt front sits at ``s(t) = 2 lam sqrt(t)`` where ``lam`` solves

    lam exp(lam^2) erf(lam) = Ste / sqrt(pi),   Ste = T_L / nu,

and the liquid temperature is ``T_L (1 - erf(x / (2 sqrt t)) / erf(lam))``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf

__all__ = ["front_constant", "front_position", "temperature", "interface_position",
           "interface_trajectory"]


def front_constant(T_L: float = 1.0, nu: float = 1.0, xtol: float = 1e-12) -> float:
    """Root ``lam`` of ``lam exp(lam^2) erf(lam) = Ste / sqrt(pi)`` by bracketing."""
    if not (T_L > 0 and nu > 0):
        raise ValueError("T_L and nu must be positive")
    ste = T_L / nu

    def f(lam):
        return lam * math.exp(lam * lam) * math.erf(lam) - ste / math.sqrt(math.pi)

    hi = 1.0
    while f(hi) < 0:
        hi *= 2.0
    return brentq(f, 0.0, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)


def front_position(t, T_L: float = 1.0, nu: float = 1.0):
    lam = front_constant(T_L, nu)
    return 2.0 * lam * np.sqrt(np.asarray(t, dtype=float))


def temperature(x, t, T_L: float = 1.0, nu: float = 1.0):
    """Similarity temperature; 0 in the solid."""
    lam = front_constant(T_L, nu)
    x = np.asarray(x, dtype=float)
    if t <= 0:
        return np.where(x <= 0, T_L, 0.0)
    z = x / (2.0 * math.sqrt(t))
    return np.where(z < lam, T_L * (1.0 - erf(z) / math.erf(lam)), 0.0)


def interface_position(x, u, level: float = 0.0, left_value: float | None = None) -> float:
    """First down-crossing of ``level`` scanning from the left, by linear
    interpolation between samples ``(x_i, u_i)``.

    ``left_value`` optionally prepends the boundary value at ``x = 0``.
    Returns ``nan`` if ``u`` never drops to ``level``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float) - level
    if left_value is not None:
        x = np.concatenate([[0.0], x])
        u = np.concatenate([[left_value - level], u])
    below = np.flatnonzero(u <= 0)
    if below.size == 0:
        return float("nan")
    i = below[0]
    if i == 0:
        return float(x[0])
    x0, x1, u0, u1 = x[i - 1], x[i], u[i - 1], u[i]
    return float(x0 + (x1 - x0) * u0 / (u0 - u1))


def interface_trajectory(field, left_value: float | None = None):
    """Front position at every stored sample of a 1D field."""
    x = field.grid.centers[:, 0]
    return np.array([interface_position(x, field.u[k], 0.0, left_value)
                     for k in range(field.n_samples)])
