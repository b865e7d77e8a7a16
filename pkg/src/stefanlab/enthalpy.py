"""Enthalpy graph with a latent-heat jump and its mollified regularization.

The unregularized graph is

    beta(s) = s          for s > 0
    beta(0) = [-nu, 0]
    beta(s) = s - nu     for s < 0

and the regularization replaces the Heaviside-type jump by a smooth ramp
``H_eps(s) = -nu * (1 - K(s / eps))``, where ``K`` is the cumulative integral
of an even polynomial bump supported on [-1, 1].  Every integral the solver
and the energy diagnostics need (``K``, the first moment of the bump and the
primitive of ``K``) is a polynomial, so nothing here uses quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import Polynomial

__all__ = [
    "EnthalpyGraph",
    "MollifierKernel",
    "RegularizedEnthalpy",
    "biweight_kernel",
    "triweight_kernel",
    "graph_eval",
    "h_eps_eval",
    "h_eps_deriv",
    "beta_eps_eval",
    "beta_eps_invert",
]


@dataclass(frozen=True)
class EnthalpyGraph:
    """Maximal monotone graph with a single jump of height ``nu`` at 0."""

    nu: float

    def __post_init__(self):
        if not np.isfinite(self.nu) or self.nu <= 0:
            raise ValueError(f"latent heat must be positive, got {self.nu}")


def graph_eval(g: EnthalpyGraph, s: float):
    """Evaluate the set-valued graph.

    Returns a float for ``s != 0`` and the closed interval ``(-nu, 0)`` as a
    tuple at ``s == 0``.
    """
    s = float(s)
    if s > 0:
        return s
    if s < 0:
        return s - g.nu
    return (-g.nu, 0.0)


@dataclass(frozen=True, eq=False)
class MollifierKernel:
    """Even polynomial bump on [-1, 1], normalized to unit mass.

    ``coef`` are the power-series coefficients of the bump in ``t``; they are
    rescaled to unit mass on construction.  The derived polynomials are

    * ``K(t)  = int_{-1}^t phi``         (cumulative, K(-1)=0, K(1)=1)
    * ``M1(t) = int_{-1}^t tau phi(tau)`` (first moment, M1(+-1)=0)
    * ``K1(t) = int_{-1}^t K``           (primitive of the cumulative)

    and are extended outside [-1, 1] by their exact constant/linear tails.
    """

    name: str
    coef: tuple
    _phi: Polynomial = field(init=False, repr=False)
    _K: Polynomial = field(init=False, repr=False)
    _M1: Polynomial = field(init=False, repr=False)
    _K1: Polynomial = field(init=False, repr=False)

    def __post_init__(self):
        raw = Polynomial(self.coef)
        odd = np.asarray(raw.coef[1::2])
        if np.any(odd != 0):
            raise ValueError("bump must be even")
        mass = raw.integ(lbnd=-1)(1.0)
        if mass <= 0:
            raise ValueError("bump must have positive mass")
        phi = raw / mass
        K = phi.integ(lbnd=-1)
        M1 = (phi * Polynomial([0.0, 1.0])).integ(lbnd=-1)
        K1 = K.integ(lbnd=-1)
        object.__setattr__(self, "_phi", phi)
        object.__setattr__(self, "_K", K)
        object.__setattr__(self, "_M1", M1)
        object.__setattr__(self, "_K1", K1)
        t = np.linspace(-1, 1, 201)
        if np.any(phi(t) < -1e-14):
            raise ValueError("bump must be non-negative on [-1, 1]")

    @property
    def peak(self) -> float:
        """Maximum of the bump, attained at 0 for the shapes used here."""
        t = np.linspace(-1, 1, 2001)
        return float(max(self._phi(0.0), self._phi(t).max()))

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) < 1.0, self._phi(np.clip(t, -1, 1)), 0.0)

    def K(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= -1.0, 0.0, np.where(t >= 1.0, 1.0, self._K(np.clip(t, -1, 1))))

    def M1(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(np.abs(t) >= 1.0, 0.0, self._M1(np.clip(t, -1, 1)))

    def K1(self, t):
        t = np.asarray(t, dtype=float)
        inner = self._K1(np.clip(t, -1, 1))
        return np.where(t <= -1.0, 0.0, np.where(t >= 1.0, inner + (t - 1.0), inner))


def biweight_kernel() -> MollifierKernel:
    """``(1 - t^2)^2`` bump (default)."""
    return MollifierKernel("biweight", (1.0, 0.0, -2.0, 0.0, 1.0))


def triweight_kernel() -> MollifierKernel:
    """``(1 - t^2)^3`` bump, used to check kernel independence."""
    return MollifierKernel("triweight", (1.0, 0.0, -3.0, 0.0, 3.0, 0.0, -1.0))


_DEFAULT_KERNEL = biweight_kernel()


@dataclass(frozen=True, eq=False)
class RegularizedEnthalpy:
    """Smooth, strictly increasing approximation ``beta_eps(s) = s + H_eps(s)``."""

    graph: EnthalpyGraph
    eps: float
    kernel: MollifierKernel = _DEFAULT_KERNEL

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0):
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")

    @classmethod
    def make(cls, nu: float, eps: float, kernel: MollifierKernel | None = None):
        return cls(EnthalpyGraph(nu), eps, kernel or _DEFAULT_KERNEL)

    @property
    def nu(self) -> float:
        return self.graph.nu

    @property
    def max_slope(self) -> float:
        """Upper bound for ``beta_eps'``."""
        return 1.0 + self.nu * self.kernel.peak / self.eps

    # -- vectorized evaluators -------------------------------------------
    def H(self, s):
        return -self.nu * (1.0 - self.kernel.K(np.asarray(s, dtype=float) / self.eps))

    def dH(self, s):
        return self.nu / self.eps * self.kernel.phi(np.asarray(s, dtype=float) / self.eps)

    def beta(self, s):
        s = np.asarray(s, dtype=float)
        return s + self.H(s)

    def dbeta(self, s):
        return 1.0 + self.dH(s)

    def primitive(self, s):
        """``int_0^s beta_eps``, the convex potential of the enthalpy."""
        s = np.asarray(s, dtype=float)
        e, k = self.eps, self.kernel
        int_H = -self.nu * s + self.nu * e * (k.K1(s / e) - k.K1(0.0))
        return 0.5 * s * s + int_H

    def jump_moment(self, a, b, level):
        """Exact ``int_a^b H_eps'(s) (s - level) ds`` (signed, elementwise)."""
        a = np.asarray(a, dtype=float) / self.eps
        b = np.asarray(b, dtype=float) / self.eps
        k = self.kernel
        return self.nu * (self.eps * (k.M1(b) - k.M1(a)) - level * (k.K(b) - k.K(a)))

    def invert(self, w, tol: float = 1e-13):
        """Vectorized inverse of ``beta_eps``; see :func:`beta_eps_invert`."""
        if not tol > 0:
            raise ValueError(f"tol must be positive, got {tol}")
        w = np.asarray(w, dtype=float)
        e, nu = self.eps, self.nu
        out = np.where(w >= e, w, w + nu)
        inside = (w > -e - nu) & (w < e)
        if np.any(inside):
            wi = w[inside]
            lo = np.full(wi.shape, -e)
            hi = np.full(wi.shape, e)
            # slope of beta_eps is bounded by max_slope, so an s-bracket of
            # width tol / max_slope pins beta_eps(s) to within tol of w
            target = tol / self.max_slope
            for _ in range(200):
                if np.max(hi - lo) <= target:
                    break
                mid = 0.5 * (lo + hi)
                below = self.beta(mid) < wi
                lo = np.where(below, mid, lo)
                hi = np.where(below, hi, mid)
            out = out.copy()
            out[inside] = 0.5 * (lo + hi)
        return out if out.ndim else float(out)


def h_eps_eval(r: RegularizedEnthalpy, s):
    """``H_eps(s) = -nu (1 - K(s/eps))``; in [-nu, 0] and non-decreasing."""
    v = r.H(s)
    return v if np.ndim(v) else float(v)


def h_eps_deriv(r: RegularizedEnthalpy, s):
    """``H_eps'(s) >= 0``; supported in (-eps, eps) with total mass nu."""
    v = r.dH(s)
    return v if np.ndim(v) else float(v)


def beta_eps_eval(r: RegularizedEnthalpy, s):
    """``beta_eps(s) = s + H_eps(s)``."""
    v = r.beta(s)
    return v if np.ndim(v) else float(v)


def beta_eps_invert(r: RegularizedEnthalpy, w, tol: float = 1e-13):
    """Return ``s`` with ``|beta_eps(s) - w| <= tol``.

    Closed form outside the mollification zone ``(-eps - nu, eps)``,
    bisection inside it.
    """
    return r.invert(w, tol)
