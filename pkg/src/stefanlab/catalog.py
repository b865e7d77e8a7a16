"""Named analytic data for configurations.

Each entry builds a function of ``x`` (shape ``(n, dim)``) and optionally
``t``, together with a declared modulus of continuity when one is known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = ["CatalogError", "DataFunction", "CATALOG", "make_data"]


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class DataFunction:
    name: str
    params: dict
    fn: Callable                   # fn(x, t) -> values
    modulus: Callable | None = None

    def __call__(self, x, t=0.0):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self.fn(x, t), dtype=float) * np.ones(len(x))


def _constant(value=0.0):
    return (lambda x, t: np.full(len(x), float(value))), (lambda r: np.zeros_like(np.asarray(r, float)))


def _linear_ramp(slope=(1.0,), offset=0.0, rate=0.0):
    a = np.asarray(slope, dtype=float)

    def fn(x, t):
        return x[:, :a.size] @ a + offset + rate * t

    L = float(np.sum(np.abs(a)))
    return fn, (lambda r: L * np.asarray(r, float))


def _piecewise_x(split=0.5, left=1.0, right=0.0, axis=0):
    def fn(x, t):
        return np.where(x[:, axis] < split, float(left), float(right))

    return fn, None


def _log_modulus(center=(0.0,), amplitude=1.0, lam=1.0, R0=0.5, offset=0.0):
    """``offset + amplitude * (ln(R0 / d))^-lam`` with ``d = |x - center|_inf``.

    ``d`` is capped at ``r_c = R0 exp(-(lam + 1))``, where the profile stops
    being concave, so the profile is concave and non-decreasing in ``d``.  It is
    therefore its own modulus of continuity, and that modulus is only
    logarithmic at the centre.
    """
    c = np.asarray(center, dtype=float)
    if not (R0 > 0 and lam > 0):
        raise CatalogError("log_modulus needs R0 > 0 and lam > 0")
    r_c = R0 * math.exp(-(lam + 1.0))

    def shape(d):
        d = np.minimum(np.asarray(d, dtype=float), r_c)
        out = np.zeros(d.shape)
        pos = d > 0
        out[pos] = np.log(R0 / d[pos]) ** (-lam)
        return out

    def fn(x, t):
        d = np.max(np.abs(x[:, :c.size] - c), axis=1)
        return offset + amplitude * shape(d)

    return fn, (lambda r: abs(amplitude) * shape(r))


def _sine_product(amplitude=1.0, size=(1.0, 1.0)):
    """``amplitude * prod_i sin(pi x_i / size_i)``; vanishes on the box boundary."""
    L = np.asarray(size, dtype=float)

    def fn(x, t):
        return amplitude * np.prod(np.sin(np.pi * x[:, :L.size] / L), axis=1)

    return fn, (lambda r: abs(amplitude) * np.pi * float(np.sum(1.0 / L)) * np.asarray(r, float))


CATALOG = {
    "constant": _constant,
    "linear_ramp": _linear_ramp,
    "piecewise_x": _piecewise_x,
    "log_modulus": _log_modulus,
    "sine_product": _sine_product,
}


def _sum(parts):
    def fn(x, t):
        return sum(p(x, t) for p in parts)

    mods = [p.modulus for p in parts]
    mod = None
    if all(m is not None for m in mods):
        def mod(r):
            return sum(m(r) for m in mods)

    return DataFunction("sum", {"parts": [p.name for p in parts]}, fn, mod)


def make_data(spec) -> DataFunction:
    """Build from ``{"name": ..., "params": {...}}``, a bare number, or a
    list of such entries (summed)."""
    if isinstance(spec, list):
        if not spec:
            raise CatalogError("empty data list")
        return _sum([make_data(s) for s in spec])
    if isinstance(spec, (int, float)):
        spec = {"name": "constant", "params": {"value": float(spec)}}
    name = spec.get("name")
    if name not in CATALOG:
        raise CatalogError(f"unknown data function {name!r}; known: {sorted(CATALOG)}")
    params = dict(spec.get("params", {}))
    try:
        fn, mod = CATALOG[name](**params)
    except TypeError as exc:
        raise CatalogError(f"bad parameters for {name}: {exc}") from None
    return DataFunction(name, params, fn, mod)
