"""Both sides of the truncated energy inequalities, evaluated on stored runs.

Every integral is a midpoint sum in space (cell centres, weight ``h^N``) and a
right-endpoint sum in time (weight ``t_n - max(t_{n-1}, t_lo)``), matching the
backward-Euler scheme.  The supremum in time is a maximum over stored steps.

Truncations ``(u - k)_+`` and ``(u - k)_-`` are taken on the whole grid and
are zero outside the domain.  Their cell gradients average the squared
one-sided differences of each axis.  Across a Dirichlet face the neighbour
value is the truncated datum at distance ``h/2``; Neumann faces carry no
difference.

Variants
--------
``interior-2.1``        lateral cutoff, singular term from ``H_eps'`` on both
                        sides plus the bottom-slice terms
``sign-restricted-2.2`` ``k >= 0`` for ``+``, ``k <= 0`` for ``-``; no
                        singular term, cutoff vanishing on the parabolic boundary
``singular-2.3``        ``k >= 0`` and sign ``-``; left side gains
                        ``k int (-H_eps(u)) zeta^p``, right side
                        ``iint (-H_eps(u)) (k - u)_+ |d_t zeta^p|``
``appendix-A.1``        same terms as 2.2, levels tied to ``mu^+-`` of the cylinder
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import ClipResult, IntrinsicCylinder, cylinder_clip
from .solver import FluxModel, SpaceTimeField

__all__ = [
    "EnergyError",
    "InadmissibleLevel",
    "Cutoff",
    "TruncationLevel",
    "EnergyReport",
    "make_level",
    "truncate",
    "sublevel_measure",
    "phi_term",
    "caccioppoli_sides",
    "neumann_energy_sides",
    "VARIANTS",
    "REPORT_COLUMNS",
]

VARIANTS = ("interior-2.1", "sign-restricted-2.2", "singular-2.3", "appendix-A.1")


class EnergyError(ValueError):
    pass


class InadmissibleLevel(EnergyError):
    pass


@dataclass(frozen=True)
class Cutoff:
    """Piecewise-linear tent on the pair ``K_{sigma r} subset K_r``.

    ``zeta_x = clip((r - |x - x_o|_inf) / ((1 - sigma) r), 0, 1)``.  The
    space-time kind multiplies by a ramp in time rising from 0 at the bottom
    of the cylinder to 1 at ``t_lo + (1 - sigma) S``.  Bounds:
    ``|D zeta| <= c_grad / ((1 - sigma) r)`` and
    ``|d_t zeta^p| <= c_time / ((1 - sigma) S)`` with ``c_grad = 1`` and
    ``c_time = p``.
    """

    kind: str = "space-time"
    sigma: float = 0.5

    def __post_init__(self):
        if self.kind not in ("space", "space-time"):
            raise EnergyError("cutoff kind must be 'space' or 'space-time'")
        if self.sigma not in (0.5, 0.75):
            raise EnergyError("sigma must be 1/2 or 3/4")

    def sample(self, cyl: IntrinsicCylinder, x: np.ndarray, t: np.ndarray):
        """Return ``(zeta, |D zeta|, |d_t zeta^p|)`` on ``len(t) x len(x)``."""
        p = cyl.p
        r = cyl.rho
        ramp = (1.0 - self.sigma) * r
        dist = np.max(np.abs(x - np.asarray(cyl.x_o)), axis=1)
        zx = np.clip((r - dist) / ramp, 0.0, 1.0)
        gx = np.where((dist > self.sigma * r) & (dist < r), 1.0 / ramp, 0.0)
        t = np.asarray(t, dtype=float)
        if self.kind == "space":
            zt = np.ones_like(t)
            dzt = np.zeros_like(t)
        else:
            t_lo, _ = cyl.t_range
            S = cyl.length
            tramp = (1.0 - self.sigma) * S
            zt = np.clip((t - t_lo) / tramp, 0.0, 1.0)
            dzt = np.where((t > t_lo) & (t < t_lo + tramp), 1.0 / tramp, 0.0)
        zeta = zt[:, None] * zx[None, :]
        grad = zt[:, None] * gx[None, :]
        dtp = p * (zx[None, :] ** p) * (zt[:, None] ** (p - 1.0)) * dzt[:, None]
        return zeta, grad, dtp

    @property
    def c_grad(self) -> float:
        return 1.0

    def c_time(self, p: float) -> float:
        return float(p) if self.kind == "space-time" else 0.0


@dataclass(frozen=True)
class TruncationLevel:
    """Level ``k`` with sign and the cylinder statistics it was built from.

    ``admissible`` records whether ``k`` respects the lateral datum on the
    cylinder (``k >= sup g`` for ``+``, ``k <= inf g`` for ``-``); ``None``
    when the cylinder does not reach the lateral boundary.
    """

    k: float
    sign: str
    admissible: bool | None = None
    mu_plus: float = float("nan")
    mu_minus: float = float("nan")
    omega: float = float("nan")

    def __post_init__(self):
        if self.sign not in ("plus", "minus"):
            raise EnergyError("sign must be 'plus' or 'minus'")


REPORT_COLUMNS = (
    "variant", "sign", "k", "cutoff_kind", "sigma", "x_o", "t_o", "rho", "theta",
    "lhs_sup_term", "lhs_grad_term", "lhs_singular_term",
    "rhs_grad_term", "rhs_time_term", "rhs_singular_term", "rhs_initial_term", "rhs_c2_term",
    "lhs_total", "rhs_total", "gamma_observed", "degenerate",
)


@dataclass(frozen=True)
class EnergyReport:
    variant: str
    level: TruncationLevel
    cutoff: Cutoff
    cylinder: IntrinsicCylinder
    lhs_sup_term: float = 0.0
    lhs_grad_term: float = 0.0
    lhs_singular_term: float = 0.0
    rhs_grad_term: float = 0.0
    rhs_time_term: float = 0.0
    rhs_singular_term: float = 0.0
    rhs_initial_term: float = 0.0
    rhs_c2_term: float = 0.0
    notes: dict = field(default_factory=dict, compare=False)

    @property
    def lhs_total(self) -> float:
        return self.lhs_sup_term + self.lhs_grad_term + self.lhs_singular_term

    @property
    def rhs_total(self) -> float:
        return (self.rhs_grad_term + self.rhs_time_term + self.rhs_singular_term
                + self.rhs_initial_term + self.rhs_c2_term)

    @property
    def degenerate(self) -> bool:
        return self.rhs_total == 0.0

    @property
    def gamma_observed(self) -> float:
        """``lhs_total / rhs_total``; ``nan`` for 0/0, ``inf`` for x/0."""
        if self.rhs_total == 0.0:
            return float("nan") if self.lhs_total == 0.0 else float("inf")
        return self.lhs_total / self.rhs_total

    def terms(self) -> dict:
        return {k: getattr(self, k) for k in REPORT_COLUMNS[9:17]}

    def row(self) -> list:
        c = self.cylinder
        return [self.variant, self.level.sign, self.level.k, self.cutoff.kind, self.cutoff.sigma,
                " ".join(repr(v) for v in c.x_o), c.t_o, c.rho, c.theta,
                *self.terms().values(), self.lhs_total, self.rhs_total,
                self.gamma_observed, int(self.degenerate)]


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------

def _trunc(u, k, sign):
    return np.maximum(u - k, 0.0) if sign == "plus" else np.maximum(k - u, 0.0)


def _time_weights(times, steps, t_lo):
    """Right-endpoint weights clipped to the cylinder's time span."""
    w = np.zeros(steps.size)
    for n, s in enumerate(steps):
        if s == 0:
            continue
        w[n] = times[s] - max(times[s - 1], t_lo)
    return np.maximum(w, 0.0)


def _lateral_g(field: SpaceTimeField, clip: ClipResult, cyl: IntrinsicCylinder):
    """Datum values on the part of the lateral boundary inside the cylinder."""
    bc, grid = field.bc, field.grid
    if bc is None or bc.kind != "dirichlet" or clip.nodes.size == 0:
        return np.zeros(0)
    dist = np.max(np.abs(grid.bface_x - np.asarray(cyl.x_o)), axis=1)
    sel = dist <= cyl.rho + 1e-12
    if not sel.any():
        return np.zeros(0)
    x = grid.bface_x[sel]
    vals = [np.asarray(bc.g(x, field.times[s]), dtype=float) * np.ones(len(x))
            for s in clip.steps]
    return np.concatenate(vals) if vals else np.zeros(0)


def make_level(field: SpaceTimeField, cyl: IntrinsicCylinder, sign: str, a: float = None,
               k: float = None) -> TruncationLevel:
    """Level on ``cyl``: explicit ``k``, or ``mu^+ - a omega`` for ``+`` and
    ``mu^- + a omega`` for ``-``.  Admissibility against the lateral datum is
    recorded."""
    clip = cylinder_clip(field.grid, cyl, field.times)
    if clip.empty:
        raise EnergyError("cylinder contains no samples")
    vals = field.u[np.ix_(clip.steps, clip.nodes)]
    mu_p, mu_m = float(vals.max()), float(vals.min())
    omega = mu_p - mu_m
    if k is None:
        if a is None:
            raise EnergyError("give either k or a")
        k = mu_p - a * omega if sign == "plus" else mu_m + a * omega
    g = _lateral_g(field, clip, cyl)
    adm = None
    if g.size:
        adm = bool(k >= g.max() - 1e-14) if sign == "plus" else bool(k <= g.min() + 1e-14)
    return TruncationLevel(float(k), sign, adm, mu_p, mu_m, omega)


def truncate(field: SpaceTimeField, level: TruncationLevel, cyl: IntrinsicCylinder) -> np.ndarray:
    """``(u - k)_+-`` on the clipped cylinder, ``steps x cube cells``.

    Cells of the cube outside the domain hold 0 whatever ``k`` is.
    """
    clip = cylinder_clip(field.grid, cyl, field.times)
    out = np.zeros((clip.steps.size, clip.box_cells.size))
    if clip.steps.size and clip.nodes.size:
        vals = field.u[np.ix_(clip.steps, clip.nodes)]
        out[:, clip.inside] = _trunc(vals, level.k, level.sign)
    return out


def sublevel_measure(field: SpaceTimeField, cyl: IntrinsicCylinder, k: float) -> float:
    """Space-time measure of ``[u < k]`` inside the clipped cylinder."""
    clip = cylinder_clip(field.grid, cyl, field.times)
    if clip.empty:
        return 0.0
    t_lo = cyl.t_range[0]
    w = _time_weights(field.times, clip.steps, t_lo)
    vals = field.u[np.ix_(clip.steps, clip.nodes)]
    return float(np.sum((vals < k).sum(axis=1) * w) * field.grid.cell_volume)


def _jump_energy(r, u, level: TruncationLevel):
    """``|int_k^u H_eps'(s)(s - k)_+- ds|`` (non-negative)."""
    k = level.k
    if level.sign == "plus":
        a, b = np.full_like(u, k), np.maximum(u, k)
        return np.maximum(r.jump_moment(a, b, k), 0.0)
    a, b = np.minimum(u, k), np.full_like(u, k)
    return np.maximum(-r.jump_moment(a, b, k), 0.0)


def _grad_sq(field: SpaceTimeField, T: np.ndarray, level: TruncationLevel, t_steps):
    """Squared cell gradients of truncations ``T`` (steps x all nodes)."""
    grid = field.grid
    n = grid.n_cells
    out = np.zeros_like(T)
    for ax in range(grid.dim):
        sel = grid.face_axis == ax
        fi, fj = grid.face_i[sel], grid.face_j[sel]
        d2 = ((T[:, fj] - T[:, fi]) / grid.h) ** 2
        ssum = np.zeros_like(T)
        cnt = np.bincount(fi, minlength=n) + np.bincount(fj, minlength=n)
        for s in range(T.shape[0]):
            ssum[s] = np.bincount(fi, weights=d2[s], minlength=n) + \
                np.bincount(fj, weights=d2[s], minlength=n)
        bsel = grid.bface_axis == ax
        if field.bc is not None and field.bc.kind == "dirichlet" and bsel.any():
            bi = grid.bface_cell[bsel]
            bx = grid.bface_x[bsel]
            cnt = cnt + np.bincount(bi, minlength=n)
            for s, t in enumerate(t_steps):
                gb = _trunc(np.asarray(field.bc.g(bx, t), dtype=float) * np.ones(len(bx)),
                            level.k, level.sign)
                db2 = ((gb - T[s, bi]) / (0.5 * grid.h)) ** 2
                ssum[s] += np.bincount(bi, weights=db2, minlength=n)
        out += ssum / np.maximum(cnt, 1)
    return out


def _bottom_index(times, t_lo):
    """Latest stored sample at or before ``t_lo`` (0 if none)."""
    idx = np.flatnonzero(times <= t_lo + 1e-12 * max(1.0, abs(t_lo)))
    return int(idx[-1]) if idx.size else 0


def _evaluate(field: SpaceTimeField, flux_p: float, level: TruncationLevel, cutoff: Cutoff,
              cyl: IntrinsicCylinder, variant: str, C2: float | None = None) -> EnergyReport:
    grid, r = field.grid, field.enthalpy
    p = flux_p
    clip = cylinder_clip(grid, cyl, field.times)
    if clip.empty:
        return EnergyReport(variant, level, cutoff, cyl, notes={"empty": True})
    V = grid.cell_volume
    steps, nodes = clip.steps, clip.nodes
    t_lo = cyl.t_range[0]
    wt = _time_weights(field.times, steps, t_lo)
    t = field.times[steps]
    x = grid.centers[nodes]
    zeta, gz, dtz = cutoff.sample(cyl, x, t)
    zp = zeta ** p

    u_all = field.u[steps]
    T_all = _trunc(u_all, level.k, level.sign)
    G2 = _grad_sq(field, T_all, level, t)[:, nodes]
    T = T_all[:, nodes]
    u = u_all[:, nodes]

    sup_slice = np.sum(zp * T ** 2, axis=1) * V
    grad_lhs = float(np.sum(np.sum(zp * G2 ** (p / 2.0), axis=1) * wt) * V)
    rhs_grad = float(np.sum(np.sum(T ** p * gz ** p, axis=1) * wt) * V)
    rhs_time = float(np.sum(np.sum(T ** 2 * dtz, axis=1) * wt) * V)
    sing_slice = np.zeros(steps.size)
    rhs_sing = rhs_init = rhs_c2 = 0.0

    with_jump = variant in ("interior-2.1", "neumann-6.1")
    if with_jump:
        F = _jump_energy(r, u, level)
        sing_slice = np.sum(zp * F, axis=1) * V
        rhs_sing = float(np.sum(np.sum(F * dtz, axis=1) * wt) * V)
        b = _bottom_index(field.times, t_lo)
        zb, _, _ = cutoff.sample(cyl, x, np.array([field.times[b]]))
        ub = field.u[b, nodes]
        Tb = _trunc(ub, level.k, level.sign)
        rhs_init = float(np.sum(zb[0] ** p * (Tb ** 2 + _jump_energy(r, ub, level))) * V)
    elif variant == "singular-2.3":
        chi_nu = -r.H(u)                       # regularized nu * chi_[u <= 0]
        sing_slice = level.k * np.sum(chi_nu * zp, axis=1) * V
        rhs_sing = float(np.sum(np.sum(chi_nu * np.maximum(level.k - u, 0.0) * dtz, axis=1)
                                * wt) * V)
    if C2 is not None:
        rhs_c2 = float(C2 ** 2 * np.sum(np.sum(zeta ** 2 * (T > 0), axis=1) * wt) * V)

    total = sup_slice + sing_slice
    j = int(np.argmax(total))
    return EnergyReport(
        variant, level, cutoff, cyl,
        lhs_sup_term=float(sup_slice[j]),
        lhs_grad_term=grad_lhs,
        lhs_singular_term=float(sing_slice[j]),
        rhs_grad_term=rhs_grad,
        rhs_time_term=rhs_time,
        rhs_singular_term=rhs_sing,
        rhs_initial_term=rhs_init,
        rhs_c2_term=rhs_c2,
        notes={"clipped": clip.clipped, "n_steps": int(steps.size), "n_nodes": int(nodes.size),
               "sup_time": float(t[j]), "c_grad": cutoff.c_grad, "c_time": cutoff.c_time(p),
               "grad_floor": None if field.flux is None else field.flux.grad_floor},
    )


def phi_term(field: SpaceTimeField, r, level: TruncationLevel, cutoff: Cutoff,
             cyl: IntrinsicCylinder) -> float:
    """``iint |int_k^u H_eps'(s)(s - k)_+- ds| |d_t zeta^p|`` by exact
    polynomial integration of ``H_eps'``."""
    clip = cylinder_clip(field.grid, cyl, field.times)
    if clip.empty:
        return 0.0
    wt = _time_weights(field.times, clip.steps, cyl.t_range[0])
    t = field.times[clip.steps]
    _, _, dtz = cutoff.sample(cyl, field.grid.centers[clip.nodes], t)
    u = field.u[np.ix_(clip.steps, clip.nodes)]
    F = _jump_energy(r, u, level)
    return float(np.sum(np.sum(F * dtz, axis=1) * wt) * field.grid.cell_volume)


def caccioppoli_sides(field: SpaceTimeField, flux: FluxModel, level: TruncationLevel,
                      cutoff: Cutoff, variant: str, cyl: IntrinsicCylinder) -> EnergyReport:
    """Evaluate every term of the chosen energy inequality."""
    if variant not in VARIANTS:
        raise EnergyError(f"unknown variant {variant!r}")
    if cyl.p != flux.p:
        raise EnergyError("cylinder exponent differs from the flux exponent")
    if level.admissible is False:
        raise InadmissibleLevel(
            f"level k={level.k} violates the lateral datum restriction "
            f"({'k >= sup g' if level.sign == 'plus' else 'k <= inf g'})")
    if variant == "sign-restricted-2.2":
        if level.sign == "plus" and level.k < 0:
            raise InadmissibleLevel("sub-solution levels must satisfy k >= 0")
        if level.sign == "minus" and level.k > 0:
            raise InadmissibleLevel("super-solution levels must satisfy k <= 0")
    if variant == "singular-2.3":
        if level.sign != "minus":
            raise InadmissibleLevel("the singular estimate is for (u - k)_- only")
        if level.k < 0:
            raise InadmissibleLevel("the singular estimate needs k >= 0")
    if variant != "interior-2.1" and cutoff.kind != "space-time":
        raise EnergyError(f"{variant} needs a cutoff vanishing on the parabolic boundary")
    return _evaluate(field, flux.p, level, cutoff, cyl, variant)


def neumann_energy_sides(field: SpaceTimeField, flux: FluxModel, level: TruncationLevel,
                         cutoff: Cutoff, cyl: IntrinsicCylinder, C_2: float) -> EnergyReport:
    """Energy terms for the Neumann problem, adding ``C_2^2 iint zeta^2 chi``."""
    if flux.p != 2:
        raise EnergyError("wrong p: the Neumann energy estimate is for p = 2")
    if C_2 < 0 or math.isnan(C_2):
        raise EnergyError("C_2 must be >= 0")
    return _evaluate(field, 2.0, level, cutoff, cyl, "neumann-6.1", C2=C_2)
