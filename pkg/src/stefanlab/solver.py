"""Implicit enthalpy solver for ``d/dt beta_eps(u) - div(|Du|^{p-2} Du) = 0``.

Space: cell-centred finite volumes with a two-point flux on every face,

    F_f = kappa(s_f) s_f,   s_f = (u_nb - u_i) / d_f,   kappa(s) = (s^2 + delta^2)^{(p-2)/2}

where ``d_f = h`` between cells and ``h/2`` to a Dirichlet face carrying the
datum ``g``.  Time: backward Euler.  One step solves

    V (beta_eps(u) - w_prev) - dt * sum_faces area * F_f = 0,

which is the gradient of the strictly convex functional

    Psi(u) = V sum_i [B(u_i) - w_prev_i u_i]
             + dt sum_f area d_f Phi(s_f) - dt sum_neumann area psi u_i,

with ``B' = beta_eps`` and ``Phi'(s) = kappa(s) s``.  The nonlinear solve is
a damped Newton iteration (Newton on ``beta_eps``, Picard or Newton on the
flux coefficient) with backtracking on ``Psi``, so accepted iterates never
increase ``Psi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .enthalpy import RegularizedEnthalpy
from .geometry import DomainGrid

__all__ = [
    "SolverError",
    "NonConvergence",
    "LinearizationError",
    "FluxModel",
    "BoundaryData",
    "SolverConfig",
    "StepInfo",
    "SpaceTimeField",
    "StepOperator",
    "step_implicit",
    "solve",
    "residual_check",
    "max_principle_check",
    "MaxPrincipleReport",
    "total_enthalpy",
    "Problem",
]


class SolverError(RuntimeError):
    pass


class NonConvergence(SolverError):
    def __init__(self, msg, residual=None, time=None):
        super().__init__(msg)
        self.residual = residual
        self.time = time


class LinearizationError(SolverError):
    pass


# --------------------------------------------------------------------------
# Model components
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FluxModel:
    """Isotropic flux ``A(xi) = kappa(|xi|) xi``.

    The default coefficient is the regularized p-Laplacian
    ``(|xi|^2 + delta^2)^{(p-2)/2}``.  A custom isotropic law can be supplied
    as ``coefficient(s2)`` together with its potential ``potential(s2)``
    (``d potential / d s = coefficient(s^2) s``); :meth:`structure_constants`
    checks the growth bounds by sampling.
    """

    p: float = 2.0
    grad_floor: float = 0.0
    coefficient: Callable | None = field(default=None, compare=False)
    potential_fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if self.grad_floor < 0:
            raise ValueError("grad_floor must be >= 0")
        if (self.coefficient is None) != (self.potential_fn is None):
            raise ValueError("a custom coefficient needs its potential as well")

    def kappa(self, s):
        s2 = np.asarray(s, dtype=float) ** 2
        if self.coefficient is not None:
            return np.asarray(self.coefficient(s2), dtype=float)
        if self.p == 2.0:
            return np.ones_like(s2)
        return (s2 + self.grad_floor ** 2) ** ((self.p - 2.0) / 2.0)

    def flux(self, s):
        s = np.asarray(s, dtype=float)
        return self.kappa(s) * s

    def dflux(self, s):
        """``dA/ds`` along a face direction (used by the Newton option)."""
        s = np.asarray(s, dtype=float)
        if self.coefficient is not None:
            d = 1e-7 * np.maximum(1.0, np.abs(s))
            return (self.flux(s + d) - self.flux(s - d)) / (2 * d)
        if self.p == 2.0:
            return np.ones_like(s)
        r2 = s * s + self.grad_floor ** 2
        e = (self.p - 4.0) / 2.0
        with np.errstate(divide="ignore", invalid="ignore"):
            out = r2 ** e * ((self.p - 1.0) * s * s + self.grad_floor ** 2)
        return np.where(r2 > 0, out, 0.0)

    def potential(self, s):
        s2 = np.asarray(s, dtype=float) ** 2
        if self.potential_fn is not None:
            return np.asarray(self.potential_fn(s2), dtype=float)
        if self.p == 2.0:
            return 0.5 * s2
        return (s2 + self.grad_floor ** 2) ** (self.p / 2.0) / self.p

    def structure_constants(self, rng=None, n: int = 1000, s_max: float = 10.0):
        """Sampled ``(C_o, C_1)`` with ``A.xi >= C_o |xi|^p`` and
        ``|A| <= C_1 |xi|^{p-1}``."""
        rng = np.random.default_rng(0) if rng is None else rng
        s = rng.uniform(1e-3, s_max, n) * rng.choice([-1.0, 1.0], n)
        a = self.flux(s)
        c_o = float(np.min(a * s / np.abs(s) ** self.p))
        c_1 = float(np.max(np.abs(a) / np.abs(s) ** (self.p - 1.0)))
        return c_o, c_1


@dataclass(frozen=True)
class BoundaryData:
    """Initial datum ``u0(x)`` plus Dirichlet ``g(x, t)`` or Neumann
    ``psi(x, t, u)`` with declared bound ``C2``.

    ``psi`` is the outward normal component of the flux, so ``psi > 0`` feeds
    heat into the domain.  ``omega_g`` and ``omega_o`` are optional declared
    moduli of continuity, checked by :meth:`check_moduli`.
    """

    kind: str
    u0: Callable
    g: Callable | None = None
    psi: Callable | None = None
    C2: float = 0.0
    omega_g: Callable | None = None
    omega_o: Callable | None = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "dirichlet" and self.g is None:
            raise ValueError("Dirichlet data needs g")
        if self.kind == "neumann" and self.C2 < 0:
            raise ValueError("C2 must be >= 0")

    def psi_values(self, x, t, u):
        if self.psi is None:
            return np.zeros(len(x))
        v = np.asarray(self.psi(x, t, u), dtype=float) * np.ones(len(x))
        if np.any(np.abs(v) > self.C2 * (1 + 1e-12) + 1e-300):
            raise SolverError(f"|psi| exceeds the declared bound C2={self.C2} at t={t}")
        return v

    def check_moduli(self, grid: DomainGrid, t_final: float, rng=None, n_pairs: int = 500):
        """Sample random point pairs and compare data increments with the
        declared moduli.  Returns the worst ratio increment / modulus for each
        declared modulus (<= 1 means consistent)."""
        rng = np.random.default_rng(0) if rng is None else rng
        out = {}
        if self.omega_o is not None:
            x = grid.centers
            i, j = rng.integers(0, len(x), (2, n_pairs))
            d = np.max(np.abs(x[i] - x[j]), axis=1)
            keep = d > 0
            du = np.abs(self.u0(x[i]) - self.u0(x[j]))[keep]
            out["omega_o"] = _worst_ratio(du, self.omega_o(d[keep]))
        if self.omega_g is not None and self.g is not None and grid.bface_x.size:
            x = grid.bface_x
            i, j = rng.integers(0, len(x), (2, n_pairs))
            t = rng.uniform(0.0, max(t_final, 0.0), n_pairs)
            d = np.max(np.abs(x[i] - x[j]), axis=1)
            keep = d > 0
            gi = np.array([self.g(x[k:k + 1], tk)[0] for k, tk in zip(i, t)])
            gj = np.array([self.g(x[k:k + 1], tk)[0] for k, tk in zip(j, t)])
            out["omega_g"] = _worst_ratio(np.abs(gi - gj)[keep], self.omega_g(d[keep]))
        return out


def _worst_ratio(inc, mod) -> float:
    """``max inc / mod`` with ``0/0 = 0`` and ``x/0 = inf``."""
    inc = np.asarray(inc, dtype=float)
    mod = np.asarray(mod, dtype=float) * np.ones_like(inc)
    r = np.zeros_like(inc)
    pos = mod > 0
    r[pos] = inc[pos] / mod[pos]
    r[~pos & (inc > 1e-14)] = np.inf
    return float(np.max(r, initial=0.0))


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    newton_tol: float = 1e-10
    max_iters: int = 50
    theta_scheme: str = "backward-euler"
    linearization: str = "picard"
    raise_on_fail: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.newton_tol > 0:
            raise ValueError("newton_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.theta_scheme != "backward-euler":
            raise ValueError("only backward Euler is supported")
        if self.linearization not in ("picard", "newton"):
            raise ValueError("linearization must be 'picard' or 'newton'")


@dataclass(frozen=True)
class StepInfo:
    iterations: int
    residual: float
    converged: bool
    psi_history: tuple


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Stored samples ``u[k]``, ``w[k]`` at ``times[k]`` (step-major)."""

    grid: DomainGrid
    times: np.ndarray
    u: np.ndarray
    w: np.ndarray
    enthalpy: RegularizedEnthalpy
    flux: FluxModel | None = None
    bc: BoundaryData | None = None
    steps: tuple = ()

    @property
    def n_samples(self) -> int:
        return int(self.times.size)

    def box(self, k: int, fill=0.0) -> np.ndarray:
        """Sample ``k`` of ``u`` on the bounding box."""
        return self.grid.to_box(self.u[k], fill)


# --------------------------------------------------------------------------
# Discrete operator
# --------------------------------------------------------------------------

class StepOperator:
    """Residual, functional and Jacobian of one backward-Euler step.

    The sparsity pattern is fixed by the grid, so the COO -> CSC map is
    computed once and each Jacobian is a single ``bincount``.
    """

    def __init__(self, grid: DomainGrid, flux: FluxModel, bc: BoundaryData,
                 r: RegularizedEnthalpy):
        self.grid, self.flux, self.bc, self.r = grid, flux, bc, r
        h = grid.h
        self.V = grid.cell_volume
        self.area = grid.face_area
        self.fi, self.fj = grid.face_i, grid.face_j
        self.bi = grid.bface_cell
        self.bx = grid.bface_x
        self.dirichlet = bc.kind == "dirichlet"
        self.d_int, self.d_bnd = h, 0.5 * h
        n = grid.n_cells
        fi, fj, bi = self.fi, self.fj, self.bi
        rows = np.concatenate([np.arange(n), fi, fj, fi, fj, bi])
        cols = np.concatenate([np.arange(n), fi, fj, fj, fi, bi])
        keys = cols.astype(np.int64) * n + rows
        uniq, inv = np.unique(keys, return_inverse=True)
        self._inv = inv
        self._indices = (uniq % n).astype(np.int32)
        counts = np.bincount((uniq // n).astype(np.int64), minlength=n)
        self._indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self._nnz = uniq.size
        self.n = n

    # boundary data for the new time level
    def boundary_values(self, t_new, u_prev):
        if self.dirichlet:
            return np.asarray(self.bc.g(self.bx, t_new), dtype=float) * np.ones(self.bi.size)
        return self.bc.psi_values(self.bx, t_new, u_prev[self.bi])

    def slopes(self, u, bvals):
        s_int = (u[self.fj] - u[self.fi]) / self.d_int
        s_bnd = (bvals - u[self.bi]) / self.d_bnd if self.dirichlet else None
        return s_int, s_bnd

    def divergence(self, u, bvals):
        """Net inflow ``sum_faces area * F`` per cell."""
        s_int, s_bnd = self.slopes(u, bvals)
        f = self.area * self.flux.flux(s_int)
        out = np.bincount(self.fi, weights=f, minlength=self.n)
        out -= np.bincount(self.fj, weights=f, minlength=self.n)
        if self.dirichlet:
            out += np.bincount(self.bi, weights=self.area * self.flux.flux(s_bnd),
                               minlength=self.n)
        else:
            out += np.bincount(self.bi, weights=self.area * bvals, minlength=self.n)
        return out

    def residual(self, u, w_prev, dt, bvals):
        """Per-cell residual in enthalpy units (divided by cell volume)."""
        return (self.r.beta(u) - w_prev) - dt * self.divergence(u, bvals) / self.V

    def functional(self, u, w_prev, dt, bvals):
        s_int, s_bnd = self.slopes(u, bvals)
        val = self.V * np.sum(self.r.primitive(u) - w_prev * u)
        diff = self.area * self.d_int * np.sum(self.flux.potential(s_int))
        if self.dirichlet:
            diff += self.area * self.d_bnd * np.sum(self.flux.potential(s_bnd))
        else:
            diff -= self.area * np.sum(bvals * u[self.bi])
        return val + dt * diff

    def jacobian(self, u, dt, bvals, linearization="picard"):
        s_int, s_bnd = self.slopes(u, bvals)
        if linearization == "newton":
            c_int = self.flux.dflux(s_int)
            c_bnd = self.flux.dflux(s_bnd) if self.dirichlet else None
        else:
            # (p - 1) kappa bounds dA/ds from above, so the frozen-coefficient
            # step majorizes the functional and full steps cannot overshoot
            m = max(1.0, self.flux.p - 1.0)
            c_int = m * self.flux.kappa(s_int)
            c_bnd = m * self.flux.kappa(s_bnd) if self.dirichlet else None
        c_int = dt * self.area / self.d_int * c_int / self.V
        diag = self.r.dbeta(u)
        if self.dirichlet:
            c_bnd = dt * self.area / self.d_bnd * c_bnd / self.V
        else:
            c_bnd = np.zeros(self.bi.size)
        vals = np.concatenate([diag, c_int, c_int, -c_int, -c_int, c_bnd])
        data = np.bincount(self._inv, weights=vals, minlength=self._nnz)
        return sp.csc_matrix((data, self._indices, self._indptr), shape=(self.n, self.n))


def _solve_linear(J, rhs):
    try:
        x = spla.splu(J).solve(rhs)
    except RuntimeError as exc:
        raise LinearizationError(f"singular linearization: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise LinearizationError("non-finite Newton update")
    return x


def step_implicit(op: StepOperator, u_prev, w_prev, t_new, dt, cfg: SolverConfig):
    """One backward-Euler step; returns ``(u, w, StepInfo)``.

    Converged means max-norm residual <= ``cfg.newton_tol`` in enthalpy
    units.  Every accepted iterate satisfies
    ``Psi_new <= Psi_old + 1e-12 max(1, |Psi_old|)`` (rounding allowance).
    """
    bvals = op.boundary_values(t_new, u_prev)
    u = np.array(u_prev, dtype=float, copy=True)
    R = op.residual(u, w_prev, dt, bvals)
    res = float(np.max(np.abs(R))) if R.size else 0.0
    psi = op.functional(u, w_prev, dt, bvals)
    hist = [psi]
    it = 0
    while res > cfg.newton_tol and it < cfg.max_iters:
        J = op.jacobian(u, dt, bvals, cfg.linearization)
        du = _solve_linear(J, -R)
        slope = float(np.dot(R, du)) * op.V
        alpha = 1.0
        allow = 1e-12 * max(1.0, abs(psi))
        while True:
            trial = u + alpha * du
            psi_t = op.functional(trial, w_prev, dt, bvals)
            if psi_t <= psi + 1e-4 * alpha * slope or (psi_t <= psi + allow and alpha == 1.0):
                break
            alpha *= 0.5
            if alpha < 1e-12:
                break
        it += 1
        if alpha < 1e-12:
            break
        u = trial
        psi = psi_t
        hist.append(psi_t)
        R = op.residual(u, w_prev, dt, bvals)
        res = float(np.max(np.abs(R)))
    converged = res <= cfg.newton_tol
    info = StepInfo(it, res, converged, tuple(hist))
    if not converged and cfg.raise_on_fail:
        raise NonConvergence(f"step to t={t_new:.6g} did not converge: residual {res:.3e} "
                             f"after {it} iterations", res, t_new)
    return u, op.r.beta(u), info


def solve(grid: DomainGrid, cfg: SolverConfig, flux: FluxModel, bc: BoundaryData,
          r: RegularizedEnthalpy, T_final: float, stride: int = 1) -> SpaceTimeField:
    """March from ``t = 0`` to ``T_final`` with fixed ``dt`` (the last step
    is shortened if ``T_final`` is not a multiple of ``dt``).  Samples are
    kept every ``stride`` steps plus the final one."""
    if T_final < 0:
        raise ValueError("T_final must be >= 0")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if bc.kind == "neumann" and flux.p != 2:
        raise SolverError("the Neumann problem is supported for p = 2 only")
    op = StepOperator(grid, flux, bc, r)
    u = np.asarray(bc.u0(grid.centers), dtype=float) * np.ones(grid.n_cells)
    w = r.beta(u)
    times, us, ws, infos = [0.0], [u], [w], []
    n_steps = int(np.ceil(T_final / cfg.dt - 1e-9)) if T_final > 0 else 0
    t = 0.0
    for n in range(1, n_steps + 1):
        t_new = T_final if n == n_steps else n * cfg.dt
        dt = t_new - t
        try:
            u, w, info = step_implicit(op, u, w, t_new, dt, cfg)
        except NonConvergence as exc:
            raise NonConvergence(f"solver failed at t={t_new:.6g}: {exc}", exc.residual,
                                 t_new) from exc
        infos.append(info)
        t = t_new
        if n % stride == 0 or n == n_steps:
            times.append(t)
            us.append(u)
            ws.append(w)
    return SpaceTimeField(grid, np.asarray(times), np.asarray(us), np.asarray(ws), r,
                          flux, bc, tuple(infos))


# --------------------------------------------------------------------------
# Diagnostics
# --------------------------------------------------------------------------

def residual_check(field: SpaceTimeField, zeta: Callable) -> float:
    """Discrete weak-form residual of a stored run against a test function.

    ``zeta(x, t)`` is sampled at cell centres and stored times; the
    residual is ``sum_n sum_i zeta_i^n R_i^n V`` with ``R^n`` the step
    equation between consecutive stored samples, normalized by
    ``sum |zeta_i^n| V``.  It is bounded by the nonlinear tolerance when
    every step is stored (stride 1).
    """
    if field.flux is None or field.bc is None:
        raise SolverError("field carries no model; re-run through solve()")
    op = StepOperator(field.grid, field.flux, field.bc, field.enthalpy)
    num, den = 0.0, 0.0
    x = field.grid.centers
    for k in range(1, field.n_samples):
        t, dt = field.times[k], field.times[k] - field.times[k - 1]
        bvals = op.boundary_values(t, field.u[k - 1])
        R = op.residual(field.u[k], field.w[k - 1], dt, bvals)
        z = np.asarray(zeta(x, t), dtype=float) * np.ones(field.grid.n_cells)
        num += float(np.dot(z, R)) * op.V
        den += float(np.sum(np.abs(z))) * op.V
    return abs(num) / den if den > 0 else 0.0


@dataclass(frozen=True)
class MaxPrincipleReport:
    bound: float
    max_abs_u: float
    margin: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.margin <= self.tol


def max_principle_check(field: SpaceTimeField, bc: BoundaryData | None = None,
                        tol: float = 1e-10) -> MaxPrincipleReport:
    """``max |u| - max{||u0||, ||g||}`` over all stored samples."""
    bc = bc or field.bc
    if bc is None or bc.kind != "dirichlet":
        raise SolverError("max principle check needs Dirichlet data")
    grid = field.grid
    M = float(np.max(np.abs(bc.u0(grid.centers))))
    for t in field.times:
        M = max(M, float(np.max(np.abs(bc.g(grid.bface_x, t)))))
    top = float(np.max(np.abs(field.u)))
    return MaxPrincipleReport(M, top, top - M, tol)


def total_enthalpy(field: SpaceTimeField, step_index: int) -> float:
    """``sum_i w_i V`` at a stored sample."""
    return float(np.sum(field.w[step_index]) * field.grid.cell_volume)


@dataclass(frozen=True)
class Problem:
    """Everything needed to run the regularized problem except ``eps``."""

    grid: DomainGrid
    bc: BoundaryData
    flux: FluxModel
    cfg: SolverConfig
    nu: float
    T_final: float
    kernel: object = None
    stride: int = 1

    def enthalpy(self, eps: float) -> RegularizedEnthalpy:
        return RegularizedEnthalpy.make(self.nu, eps, self.kernel)

    def run(self, eps: float) -> SpaceTimeField:
        return solve(self.grid, self.cfg, self.flux, self.bc, self.enthalpy(eps),
                     self.T_final, self.stride)
