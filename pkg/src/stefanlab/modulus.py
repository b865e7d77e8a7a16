"""Oscillation over shrinking intrinsic cylinders and modulus fits.

Candidate moduli, all fitted by least squares on ``ln osc``:

``TypeII``   ``osc = C (ln(rho_bar / r))^-s``      against ``ln ln(rho_bar / r)``
``TypeI``    ``osc = C (ln ln(rho_bar / r))^-s``   against ``ln ln ln(rho_bar / r)``
``Hoelder``  ``osc = C r^a``                       against ``ln r``

Because the response is ``ln osc`` in every model, residuals are directly
comparable.  Radii are carried as logarithms so that synthetic series may go
far below the smallest positive double.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .geometry import IntrinsicCylinder, cylinder_clip
from .solver import Problem, SpaceTimeField, SolverError

__all__ = [
    "ModulusError",
    "EmptyCylinder",
    "DegenerateFit",
    "Anchor",
    "OscillationSeries",
    "ModulusFit",
    "ModelRanking",
    "InitialLayerReport",
    "SweepReport",
    "MODELS",
    "measure_oscillation",
    "fit_modulus",
    "envelope_constant",
    "compare_models",
    "initial_layer_decay",
    "equicontinuity_sweep",
    "synthetic_series",
]

MODELS = ("TypeI", "TypeII", "Hoelder")


class ModulusError(ValueError):
    pass


class EmptyCylinder(ModulusError):
    pass


class DegenerateFit(ModulusError):
    pass


@dataclass(frozen=True)
class Anchor:
    """Vertex ``(x_o, t_o)`` of a family of cylinders.

    ``kind`` is ``lateral``, ``interior`` or ``initial``; initial anchors use
    forward cylinders starting at ``t_o``.
    """

    x_o: tuple
    t_o: float
    kind: str = "interior"
    anchor_id: str = "a0"

    def __post_init__(self):
        if self.kind not in ("lateral", "interior", "initial"):
            raise ModulusError(f"unknown anchor kind {self.kind!r}")
        object.__setattr__(self, "x_o", tuple(float(v) for v in np.atleast_1d(self.x_o)))


@dataclass(frozen=True, eq=False)
class OscillationSeries:
    anchor: Anchor
    log_r: np.ndarray
    theta: np.ndarray
    osc: np.ndarray
    omega0: float
    rho0: float
    rho_bar: float

    @property
    def r(self) -> np.ndarray:
        return np.exp(self.log_r)

    def __len__(self):
        return int(self.osc.size)

    def subset(self, idx) -> "OscillationSeries":
        return OscillationSeries(self.anchor, self.log_r[idx], self.theta[idx], self.osc[idx],
                                 self.omega0, self.rho0, self.rho_bar)

    def rows(self):
        for lr, th, o in zip(self.log_r, self.theta, self.osc):
            yield (self.anchor.anchor_id, self.anchor.kind, float(math.exp(lr)), float(th),
                   float(o))


def synthetic_series(log_r, osc, rho_bar=1.0, anchor: Anchor | None = None) -> OscillationSeries:
    """Wrap model-generated data as a series (theta = 1)."""
    log_r = np.asarray(log_r, dtype=float)
    osc = np.asarray(osc, dtype=float)
    anchor = anchor or Anchor((0.0,), 0.0, "interior", "synthetic")
    return OscillationSeries(anchor, log_r, np.ones_like(log_r), osc,
                             float(osc[0]), float(np.exp(log_r[0])), float(rho_bar))


# --------------------------------------------------------------------------
# Measurement
# --------------------------------------------------------------------------

def _osc(field: SpaceTimeField, clip):
    vals = field.u[np.ix_(clip.steps, clip.nodes)]
    return float(vals.max() - vals.min())


def measure_oscillation(field: SpaceTimeField, anchor: Anchor, schedule, p: float = 2.0,
                        xi: float = 1.0, rho_bar: float | None = None,
                        theta0: float = 1.0) -> OscillationSeries:
    """Oscillation of ``u`` over nested intrinsic cylinders.

    The first cylinder uses ``theta0``.  Each later radius uses
    ``theta = (xi * osc)^(2-p)`` built from the oscillation just measured.
    ``theta`` is capped so that the new cylinder stays inside the previous
    one.  Nesting is verified on the index sets, which makes the series
    non-increasing.
    """
    sched = np.asarray(schedule, dtype=float)
    if sched.size == 0 or np.any(np.diff(sched) >= 0):
        raise ModulusError("schedule must be strictly decreasing")
    grid = field.grid
    if sched[-1] < 2 * grid.h - 1e-12:
        raise EmptyCylinder("radii must be at least 2h")
    forward = anchor.kind == "initial"
    thetas, oscs = [], []
    prev_len, prev_set, current = None, None, None
    for r in sched:
        if current is None:
            theta = theta0
        elif p == 2 or current <= 0:
            theta = thetas[-1] if p != 2 else 1.0
        else:
            theta = (xi * current) ** (2.0 - p)
        if prev_len is not None:
            theta = min(theta, prev_len / r ** p)
        cyl = IntrinsicCylinder(anchor.x_o, anchor.t_o, r, theta, p, forward)
        clip = cylinder_clip(grid, cyl, field.times)
        if clip.empty:
            raise EmptyCylinder(f"no samples in the cylinder of radius {r:g} at {anchor.x_o}")
        idx = set(itertools.product(clip.steps.tolist(), clip.nodes.tolist()))
        if prev_set is not None and not idx <= prev_set:
            raise ModulusError("cylinders are not nested")
        o = _osc(field, clip)
        thetas.append(theta)
        oscs.append(o)
        prev_len, prev_set, current = cyl.length, idx, o
    # without a certified radius, twice the largest radius keeps log fits defined
    rb = rho_bar if rho_bar is not None else (grid.rho_bar or 2.0 * float(sched[0]))
    return OscillationSeries(anchor, np.log(sched), np.asarray(thetas), np.asarray(oscs),
                             oscs[0], float(sched[0]), float(rb))


# --------------------------------------------------------------------------
# Fitting
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ModulusFit:
    model: str
    C: float
    exponent: float
    residual: float
    rho_bar: float
    n: int

    @property
    def valid(self) -> bool:
        return self.C > 0 and self.exponent > 0

    def predict(self, log_r):
        return np.exp(_predict_log(self.model, self.C, self.exponent, self.rho_bar, log_r))

    def row(self, anchor_id: str):
        return (anchor_id, self.model, self.C, self.exponent, self.residual)


def _design(model: str, log_r, rho_bar: float):
    log_r = np.asarray(log_r, dtype=float)
    L = math.log(rho_bar) - log_r          # ln(rho_bar / r)
    if model == "Hoelder":
        return log_r, +1.0
    if np.any(L <= 0):
        raise ModulusError("log models need r < rho_bar")
    if model == "TypeII":
        return np.log(L), -1.0
    if model == "TypeI":
        if np.any(L <= 1):
            raise ModulusError("TypeI needs ln(rho_bar / r) > 1")
        return np.log(np.log(L)), -1.0
    raise ModulusError(f"unknown model {model!r}")


def _predict_log(model, C, e, rho_bar, log_r):
    x, sgn = _design(model, log_r, rho_bar)
    return math.log(C) + sgn * e * x


def fit_modulus(series: OscillationSeries, model: str,
                rho_bar: float | None = None) -> ModulusFit:
    """Least squares on the linearized scale; residual is the RMS in ``ln osc``."""
    if len(series) < 4:
        raise ModulusError("need at least 4 entries")
    if np.any(series.osc <= 0):
        raise ModulusError("oscillation entries must be positive")
    rb = series.rho_bar if rho_bar is None else rho_bar
    x, sgn = _design(model, series.log_r, rb)
    if np.ptp(x) == 0:
        raise DegenerateFit("all radii are equal")
    y = np.log(series.osc)
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return ModulusFit(model, float(np.exp(coef[0])), float(sgn * coef[1]),
                      float(np.sqrt(np.mean(res ** 2))), float(rb), len(series))


def envelope_constant(series: OscillationSeries, fit: ModulusFit) -> float:
    """Smallest ``C'`` such that ``C' * shape(r)`` dominates every entry."""
    pred = _predict_log(fit.model, fit.C, fit.exponent, fit.rho_bar, series.log_r)
    return float(fit.C * np.exp(np.max(np.log(series.osc) - pred)))


@dataclass(frozen=True)
class ModelRanking:
    winner: str
    order: tuple
    fits: dict
    ratios: dict
    typeII_drift: dict


def compare_models(series: OscillationSeries) -> ModelRanking:
    """Fit every model, rank by residual and report residual ratios.

    ``typeII_drift`` refits TypeII on nested tails (all entries, the last 3/4,
    the last 1/2).  ``upward`` is set when the exponent grows monotonically
    by more than 5% across the tails.  Power-law data drift this way.
    """
    fits = {}
    for m in MODELS:
        try:
            fits[m] = fit_modulus(series, m)
        except ModulusError:
            continue
    if not fits:
        raise ModulusError("no model could be fitted")
    order = tuple(sorted(fits, key=lambda m: (fits[m].residual, MODELS.index(m))))
    best = fits[order[0]].residual
    ratios = {m: (fits[m].residual / best if best > 0 else
                  (1.0 if fits[m].residual == 0 else math.inf)) for m in order}
    drift = {"exponents": [], "upward": False}
    if "TypeII" in fits:
        n = len(series)
        s_vals = []
        for frac in (1.0, 0.75, 0.5):
            k = max(4, int(math.ceil(frac * n)))
            sub = series.subset(slice(n - k, n))
            try:
                s_vals.append(fit_modulus(sub, "TypeII").exponent)
            except ModulusError:
                break
        drift["exponents"] = s_vals
        if len(s_vals) == 3 and s_vals[0] > 0:
            drift["upward"] = bool(s_vals[0] < s_vals[1] < s_vals[2]
                                   and s_vals[2] > 1.05 * s_vals[0])
    return ModelRanking(order[0], order, fits, ratios, drift)


# --------------------------------------------------------------------------
# Initial layer
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InitialLayerReport:
    series: OscillationSeries
    c1: float
    a: float
    c2: float
    c3: float
    dominated: bool
    dominant_term_at_min_r: str
    terms_at_min_r: dict = field(default_factory=dict)


def initial_layer_decay(field: SpaceTimeField, anchor: Anchor, schedule, omega0: float,
                        rho0: float, omega_o=None, omega_g=None, p: float = 2.0,
                        xi: float = 1.0, exponents=None) -> InitialLayerReport:
    """Forward-in-time oscillation at an initial anchor and its smallest
    dominating envelope ``c1 (r/rho)^a + c2 omega_o(sqrt(r rho)) + c3 omega_g(sqrt(r rho))``.

    ``c1`` is the starting oscillation ``omega0``.  Leaving it free lets a
    power with a tiny exponent imitate any slow decay over a finite range of
    radii, which would hide the data terms.  For each trial ``a`` in (0, 1] a
    linear program minimizes the envelope summed over the schedule subject to
    domination with ``c2, c3 >= 0``.  The exponent with the smallest optimum
    is kept.
    """
    if anchor.kind != "initial":
        raise ModulusError("initial_layer_decay needs an initial anchor")
    sched = np.asarray(schedule, dtype=float)
    theta0 = omega0 ** (2.0 - p) if (p != 2 and omega0 > 0) else 1.0
    if theta0 * np.max(sched) ** p > field.times[-1] - anchor.t_o + 1e-12:
        raise ModulusError("forward cylinders do not fit below T")
    series = measure_oscillation(field, anchor, sched, p, xi, theta0=theta0)
    r = series.r
    m = np.sqrt(r * rho0)
    cols = [np.zeros_like(r), np.zeros_like(r)]
    if omega_o is not None:
        cols[0] = np.asarray(omega_o(m), dtype=float)
    if omega_g is not None:
        cols[1] = np.asarray(omega_g(m), dtype=float)
    exps = np.linspace(0.05, 1.0, 20) if exponents is None else np.asarray(exponents)
    c1 = float(omega0)
    A = np.stack(cols, axis=1)
    best = None
    for a in exps:
        hol = c1 * (r / rho0) ** a
        res = linprog(A.sum(axis=0), A_ub=-A, b_ub=hol - series.osc, bounds=[(0, None)] * 2,
                      method="highs")
        if res.status != 0:
            continue
        total = res.fun + hol.sum()
        if best is None or total < best[0] - 1e-15:
            best = (total, a, res.x)
    if best is None:
        raise ModulusError("no dominating envelope found")
    _, a, (c2, c3) = best
    env = c1 * (r / rho0) ** a + c2 * cols[0] + c3 * cols[1]
    dominated = bool(np.all(series.osc <= env * (1 + 1e-9) + 1e-15))
    i = int(np.argmin(r))
    terms = {"hoelder": float(c1 * (r[i] / rho0) ** a), "omega_o": float(c2 * cols[0][i]),
             "omega_g": float(c3 * cols[1][i])}
    dom = max(terms, key=terms.get)
    return InitialLayerReport(series, float(c1), float(a), float(c2), float(c3), dominated,
                              dom, terms)


# --------------------------------------------------------------------------
# Equicontinuity in eps
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SweepReport:
    eps: tuple
    fits: dict                   # (eps, anchor_id) -> ModulusFit
    series: dict                 # (eps, anchor_id) -> OscillationSeries
    spread: dict                 # anchor_id -> {"C": rel spread, "s": rel spread}
    distances: dict              # (eps_i, eps_j) -> sup |u_i - u_j|
    fields: dict = field(default_factory=dict, repr=False)

    def consecutive_distances(self):
        e = self.eps
        return [self.distances[(e[i], e[i + 1])] for i in range(len(e) - 1)]

    @property
    def distances_nonincreasing(self) -> bool:
        d = self.consecutive_distances()
        return all(d[i + 1] <= d[i] for i in range(len(d) - 1))


def _rel_spread(v):
    v = np.asarray(v, dtype=float)
    m = np.mean(np.abs(v))
    return float((v.max() - v.min()) / m) if m > 0 else 0.0


def equicontinuity_sweep(problem: Problem, eps_list, anchors, schedule, p: float = 2.0,
                         xi: float = 1.0, keep_fields: bool = False,
                         model: str = "TypeII") -> SweepReport:
    """Solve for each ``eps``, measure the shared anchors, fit ``model`` and
    tabulate ``sup |u_eps - u_eps'|`` over all pairs."""
    eps = tuple(float(e) for e in eps_list)
    if len(eps) < 3:
        raise ModulusError("need at least three eps values")
    for a, b in zip(eps, eps[1:]):
        if not math.isclose(b, a / 2, rel_tol=1e-9):
            raise ModulusError("each eps must halve the previous one")
    fields, fits, series = {}, {}, {}
    for e in eps:
        try:
            fields[e] = problem.run(e)
        except SolverError as exc:
            raise SolverError(f"solver failed for eps={e}: {exc}") from exc
        for an in anchors:
            s = measure_oscillation(fields[e], an, schedule, p, xi)
            series[(e, an.anchor_id)] = s
            fits[(e, an.anchor_id)] = fit_modulus(s, model)
    spread = {}
    for an in anchors:
        fs = [fits[(e, an.anchor_id)] for e in eps]
        spread[an.anchor_id] = {"C": _rel_spread([f.C for f in fs]),
                                "s": _rel_spread([f.exponent for f in fs])}
    dist = {}
    for a, b in itertools.combinations(eps, 2):
        dist[(a, b)] = float(np.max(np.abs(fields[a].u - fields[b].u)))
    return SweepReport(eps, fits, series, spread, dist, fields if keep_fields else {})
