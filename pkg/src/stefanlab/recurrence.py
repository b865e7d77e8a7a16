"""Oscillation-reduction schemes as explicit difference equations.

Schemes
-------
``TypeI``      omega_{n+1} = (1 - 2^{-1/omega_n^q}) omega_n
``TypeII``     omega_{n+1} = omega_n (1 - eta omega_n^q)
``BoundaryD``  Dirichlet boundary scheme: TypeII reduction, capped below by
               the feeds ``A rho_n^alpha_o`` and ``2 C_g ln(1/rho_n)^-lam``,
               with radii ``rho_{n+1}^p = xi_t omega_n^qbar rho_n^p``
``Interior``   interior scheme with feed ``A rho_n^{1/(a+p-2)}`` and
               geometric radii ``rho_{n+1} = c rho_n``
``NeumannN``   Neumann scheme (p = 2) with feed ``gamma C_2 rho_n`` and
               radii ``rho_{n+1}^2 = (rho_n / 2)^2 theta_n``

Radii of the boundary scheme shrink super-geometrically and underflow after a
few dozen steps, so all radii are carried as natural logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import mpmath
import numpy as np

__all__ = [
    "RecurrenceError",
    "NestingViolation",
    "TraceExhausted",
    "RecurrenceSpec",
    "IterationTrace",
    "DeGiorgiParams",
    "DeGiorgiResult",
    "DominationReport",
    "ExponentFit",
    "iterate_type",
    "iterate_boundary_scheme",
    "iterate_interior_scheme",
    "iterate_neumann_scheme",
    "dominating_sequence_check",
    "invert_radius_to_index",
    "degiorgi_threshold",
    "degiorgi_converges",
    "jstar_select",
    "m_select",
    "jstar_delta",
    "asymptotic_exponent",
    "index_bound_constant",
]

SCHEMES = ("TypeI", "TypeII", "BoundaryD", "Interior", "NeumannN")
CLAMP = 1e300
_LOG_CLAMP = math.log(CLAMP)


class RecurrenceError(ValueError):
    pass


class NestingViolation(RecurrenceError):
    pass


class TraceExhausted(RecurrenceError):
    pass


@dataclass(frozen=True)
class RecurrenceSpec:
    """Parameters of one iteration scheme.

    Derived constants left as ``None`` take the values used in the
    corresponding reduction argument; see :meth:`resolved`.  ``eta = 0`` is
    accepted as a degenerate, non-reducing scheme.
    """

    scheme: str
    eta: float = 0.5
    q: float = 1.0
    p: float = 2.0
    N: int = 1
    xi: float = 0.1
    xi_bar: float = 0.5
    A: float | None = None
    alpha_o: float | None = None
    q_bar: float | None = None
    xi_tilde: float | None = None
    lam: float = 2.0
    C_g: float = 0.0
    kappa: float | None = None
    L_o: float = 1.0
    c_o: float = 1.0
    c: float | None = None
    gamma: float = 1.0
    C2: float = 0.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise RecurrenceError(f"unknown scheme {self.scheme!r}")
        if not (0.0 <= self.eta < 1.0):
            raise RecurrenceError("eta must lie in [0, 1)")
        if self.scheme != "Interior" and not self.q > 0:
            raise RecurrenceError("q must be positive")
        if self.p < 2:
            raise RecurrenceError("p must be >= 2")
        if self.scheme == "NeumannN" and self.p != 2:
            raise RecurrenceError("the Neumann scheme is stated for p = 2")
        for name in ("xi", "xi_bar", "L_o", "c_o", "gamma"):
            if not getattr(self, name) > 0:
                raise RecurrenceError(f"{name} must be positive")
        for name in ("A", "alpha_o", "q_bar", "xi_tilde", "kappa", "c"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise RecurrenceError(f"{name} must be positive")
        if self.C_g < 0 or self.C2 < 0 or self.lam <= 0:
            raise RecurrenceError("C_g, C2 must be >= 0 and lam > 0")

    def resolved(self) -> "RecurrenceSpec":
        """Copy with every derived constant filled in."""
        p, q = self.p, self.q
        upd = {}
        if self.scheme == "BoundaryD":
            if self.alpha_o is None:
                upd["alpha_o"] = 1.0 / ((p - 1.0) * (1.0 + q))
            if self.A is None:
                upd["A"] = (8.0 ** (p / (p - 1.0)) * self.xi * self.xi_bar) ** (-1.0 / (1.0 + q))
            if self.q_bar is None:
                upd["q_bar"] = 1.0 + (p - 1.0) * q
            if self.xi_tilde is None:
                # matches theta~_{n+1}(8 rho_{n+1})^p to theta_n (rho_n/4)^p
                # under the worst case omega_{n+1} = omega_n / 2
                upd["xi_tilde"] = (32.0 ** (-p) * self.xi * self.xi_bar ** (p - 1.0)
                                   * 2.0 ** (-(1.0 + q) * (p - 1.0)))
        elif self.scheme == "Interior":
            kappa = self.kappa if self.kappa is not None else q * p / (self.N + p)
            upd["kappa"] = kappa
            upd["q"] = (self.N + p) * kappa / p
            a = (self.N + p) * (p - 2.0) * kappa / p
            if self.A is None and a + p - 2.0 > 0:
                upd["A"] = self.L_o ** (1.0 / (a + p - 2.0)) * 4.0 ** ((p - 2.0) / (a + p - 2.0))
            if self.c is None:
                upd["c"] = 2.0 ** (-(2.0 * p + a - 2.0) / p)
        elif self.scheme == "NeumannN":
            if self.c is None:
                upd["c"] = (self.N + 2.0) / 2.0
        return replace(self, **upd) if upd else self

    @property
    def interior_a(self) -> float:
        kappa = self.kappa if self.kappa is not None else self.q * self.p / (self.N + self.p)
        return (self.N + self.p) * (self.p - 2.0) * kappa / self.p

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class IterationTrace:
    """Generated sequences; radius-free schemes leave the radius arrays empty."""

    spec: RecurrenceSpec
    omega: np.ndarray
    log_rho: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta: np.ndarray = field(default_factory=lambda: np.zeros(0))
    theta_tilde: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reason: str = "n_max"

    def __len__(self):
        return int(self.omega.size)

    @property
    def rho(self) -> np.ndarray:
        return np.exp(self.log_rho)

    def rows(self):
        """CSV rows ``(n, omega, rho, log_rho, theta, theta_tilde)``."""
        n = len(self)
        has_r = self.log_rho.size == n
        nan = float("nan")
        for i in range(n):
            yield (
                i,
                float(self.omega[i]),
                float(math.exp(self.log_rho[i])) if has_r else nan,
                float(self.log_rho[i]) if has_r else nan,
                float(self.theta[i]) if self.theta.size == n else nan,
                float(self.theta_tilde[i]) if self.theta_tilde.size == n else nan,
            )


# --------------------------------------------------------------------------
# Type I / Type II
# --------------------------------------------------------------------------

def iterate_type(spec: RecurrenceSpec, omega0: float, n_max: int) -> IterationTrace:
    """Iterate the pure TypeI or TypeII recurrence ``n_max`` times."""
    if spec.scheme not in ("TypeI", "TypeII"):
        raise RecurrenceError("iterate_type needs a TypeI or TypeII spec")
    if not (0.0 < omega0 < 1.0):
        raise RecurrenceError("omega0 must lie in (0, 1)")
    if n_max < 1:
        raise RecurrenceError("n_max must be >= 1")
    q, eta = spec.q, spec.eta
    out = np.empty(n_max + 1)
    w = float(omega0)
    out[0] = w
    if spec.scheme == "TypeII":
        for n in range(1, n_max + 1):
            w = w * (1.0 - eta * w ** q)
            out[n] = w
    else:
        for n in range(1, n_max + 1):
            w = w * (1.0 - 2.0 ** (-1.0 / w ** q))
            out[n] = w
    return IterationTrace(spec, out)


# --------------------------------------------------------------------------
# Schemes with radii
# --------------------------------------------------------------------------

def _stop_log(r_stop, log_r_stop):
    if log_r_stop is not None:
        return float(log_r_stop)
    if r_stop is not None and r_stop > 0:
        return math.log(r_stop)
    return -math.inf


def _g_feed(spec: RecurrenceSpec, log_rho: float) -> float:
    if spec.C_g == 0.0:
        return 0.0
    # osc of g over the n-th boundary cylinder, fed from the declared modulus
    return 2.0 * spec.C_g * (-log_rho) ** (-spec.lam)


def _check_start(omega0, rho0):
    if not omega0 > 0:
        raise RecurrenceError("omega0 must be positive")
    if not (0.0 < rho0 < 1.0):
        raise RecurrenceError("rho0 must lie in (0, 1)")


def iterate_boundary_scheme(spec: RecurrenceSpec, omega0: float, rho0: float,
                            r_stop: float | None = None, n_max: int = 100_000,
                            log_r_stop: float | None = None,
                            rel_tol: float = 1e-12) -> IterationTrace:
    """Dirichlet boundary scheme, run until ``rho_n < r_stop`` or ``n_max``.

    Each step checks that the next start cylinder fits inside the current
    reduced cylinder, both in time
    ``theta~_{n+1} (8 rho_{n+1})^p <= theta_n (rho_n / 4)^p``
    and in space ``8 rho_{n+1} <= rho_n / 4``.  The new oscillation is capped
    by the current one, since it bounds the oscillation over a subset.
    """
    if spec.scheme != "BoundaryD":
        raise RecurrenceError("need a BoundaryD spec")
    _check_start(omega0, rho0)
    s = spec.resolved()
    p, q, eta = s.p, s.q, s.eta
    stop = _stop_log(r_stop, log_r_stop)
    log_xi_t = math.log(s.xi_tilde)
    log_A = math.log(s.A)

    def log_theta(w):
        return (2.0 - p) * math.log(s.xi * w)

    def log_theta_t(w):
        return (1.0 - p) * math.log(s.xi * s.xi_bar * w ** (1.0 + q))

    om, lr = [float(omega0)], [math.log(rho0)]
    reason = "n_max"
    for n in range(n_max):
        w, l = om[-1], lr[-1]
        if l < stop:
            reason = "r_stop"
            break
        reduced = w * (1.0 - eta * w ** q)
        feed_a = math.exp(log_A + s.alpha_o * l) if log_A + s.alpha_o * l > -745 else 0.0
        w_next = min(w, max(reduced, feed_a, _g_feed(s, l)))
        l_next = (log_xi_t + s.q_bar * math.log(w) + p * l) / p
        lhs = log_theta_t(w_next) + p * (math.log(8.0) + l_next)
        rhs = log_theta(w) + p * (l - math.log(4.0))
        if lhs > rhs + rel_tol * max(1.0, abs(rhs)):
            raise NestingViolation(
                f"step {n}: time nesting fails ({lhs:.6g} > {rhs:.6g} in log units)")
        if math.log(8.0) + l_next > l - math.log(4.0) + rel_tol * max(1.0, abs(l)):
            raise NestingViolation(f"step {n}: spatial nesting fails")
        om.append(w_next)
        lr.append(l_next)
    else:
        if lr[-1] < stop:
            reason = "r_stop"
    om = np.asarray(om)
    lr = np.asarray(lr)
    theta = np.exp((2.0 - p) * np.log(s.xi * om))
    theta_t = np.exp((1.0 - p) * np.log(s.xi * s.xi_bar * om ** (1.0 + q)))
    return IterationTrace(s, om, lr, theta, theta_t, reason)


def iterate_interior_scheme(spec: RecurrenceSpec, omega0: float, rho0: float,
                            r_stop: float | None = None, n_max: int = 100_000,
                            log_r_stop: float | None = None) -> IterationTrace:
    """Interior scheme with ``theta_n = L_o omega_n^-a (omega_n / 4)^(2-p)``.

    With ``p = 2`` the exponent ``a`` vanishes and the feed drops out, so the
    oscillation sequence no longer depends on ``L_o``.
    """
    if spec.scheme != "Interior":
        raise RecurrenceError("need an Interior spec")
    _check_start(omega0, rho0)
    s = spec.resolved()
    p, q, eta = s.p, s.q, s.eta
    a = s.interior_a
    expo = a + p - 2.0
    stop = _stop_log(r_stop, log_r_stop)
    log_c = math.log(s.c)
    om, lr = [float(omega0)], [math.log(rho0)]
    reason = "n_max"
    for _ in range(n_max):
        w, l = om[-1], lr[-1]
        if l < stop:
            reason = "r_stop"
            break
        reduced = w * (1.0 - eta * w ** q)
        feed = 0.0
        if expo > 0:
            lf = math.log(s.A) + l / expo
            feed = math.exp(lf) if lf > -745 else 0.0
        om.append(min(w, max(reduced, feed)))
        lr.append(l + log_c)
    om = np.asarray(om)
    lr = np.asarray(lr)
    theta = s.L_o * om ** (-a) * (om / 4.0) ** (2.0 - p)
    return IterationTrace(s, om, lr, theta, np.zeros(0), reason)


def iterate_neumann_scheme(spec: RecurrenceSpec, omega0: float, rho0: float,
                           r_stop: float | None = None, n_max: int = 100_000,
                           log_r_stop: float | None = None) -> IterationTrace:
    """Neumann scheme (p = 2): ``theta_n = c_o (omega_n/4)^c`` and feed
    ``gamma C_2 rho_n``."""
    if spec.scheme != "NeumannN":
        raise RecurrenceError("need a NeumannN spec")
    _check_start(omega0, rho0)
    s = spec.resolved()
    q, eta = s.q, s.eta
    stop = _stop_log(r_stop, log_r_stop)
    om, lr = [float(omega0)], [math.log(rho0)]
    reason = "n_max"
    for n in range(n_max):
        w, l = om[-1], lr[-1]
        if l < stop:
            reason = "r_stop"
            break
        log_theta = math.log(s.c_o) + s.c * math.log(w / 4.0)
        if log_theta > 0:
            raise NestingViolation(f"step {n}: theta_n > 1, cylinders would not shrink")
        reduced = w * (1.0 - eta * w ** q)
        feed = s.gamma * s.C2 * math.exp(l)
        om.append(min(w, max(reduced, feed)))
        lr.append(l - math.log(2.0) + 0.5 * log_theta)
    om = np.asarray(om)
    lr = np.asarray(lr)
    theta = s.c_o * (om / 4.0) ** s.c
    return IterationTrace(s, om, lr, theta, np.zeros(0), reason)


# --------------------------------------------------------------------------
# Domination, radius inversion, index bound
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DominationReport:
    success: bool
    n_o: int | None
    sigma: float
    checked_until: int
    message: str


def dominating_sequence_check(trace: IterationTrace, sigma: float) -> DominationReport:
    """Look for ``n_o`` beyond which ``a_n = (1+n)^-sigma max{1, omega_0}``
    dominates the trace.

    Requires ``a_{n_o} >= omega_{n_o}`` and, for all later ``n`` in the trace,
    ``a_{n+1}`` at least each of the reduced value ``a_n (1 - eta a_n^q)`` and
    the feeds evaluated on the reference radii ``r_{n+1}^p = xi_t r_n^p``,
    ``r_0 = 1``.  The search only accepts ``n_o`` in the first half of the
    trace so that "for all later n" is tested on a non-trivial tail.
    """
    s = trace.spec.resolved()
    if not sigma > 0:
        raise RecurrenceError("sigma must be positive")
    n_len = len(trace)
    n = np.arange(n_len, dtype=float)
    a = (1.0 + n) ** (-sigma) * max(1.0, float(trace.omega[0]))
    need = a[:-1] * (1.0 - s.eta * a[:-1] ** s.q)
    if s.scheme == "BoundaryD":
        log_r = n[:-1] * math.log(s.xi_tilde) / s.p
        feed_a = np.exp(math.log(s.A) + s.alpha_o * log_r)
        with np.errstate(divide="ignore", invalid="ignore"):
            feed_g = np.where(log_r < 0, 2.0 * s.C_g * np.abs(log_r) ** (-s.lam), np.inf)
        if s.C_g == 0.0:
            feed_g = np.zeros_like(log_r)
        need = np.maximum(need, np.maximum(feed_a, feed_g))
    elif s.scheme == "Interior" and s.interior_a + s.p - 2.0 > 0:
        log_r = n[:-1] * math.log(s.c)
        need = np.maximum(need, np.exp(math.log(s.A) + log_r / (s.interior_a + s.p - 2.0)))
    elif s.scheme == "NeumannN":
        need = np.maximum(need, s.gamma * s.C2 * np.exp(trace.log_rho[:-1]))
    ok_step = a[1:] >= need * (1.0 - 1e-14)
    # suffix_ok[k] is True iff every step from k on is satisfied
    suffix_ok = np.flip(np.logical_and.accumulate(np.flip(ok_step)))
    start_ok = a[:-1] >= trace.omega[:-1]
    cand = np.flatnonzero(suffix_ok & start_ok)
    half = n_len // 2
    if cand.size and cand[0] <= half:
        return DominationReport(True, int(cand[0]), sigma, n_len - 1, "dominated")
    msg = "no admissible n_o in the first half of the trace"
    if not suffix_ok[-min(10, ok_step.size):].all():
        msg = "domination fails at the end of the trace"
    return DominationReport(False, None, sigma, n_len - 1, msg)


def invert_radius_to_index(trace: IterationTrace, r: float | None = None,
                           log_r: float | None = None):
    """Return ``(n, omega_{n+1})`` with ``rho_{n+1} < 4 r <= rho_n``."""
    if trace.log_rho.size != len(trace):
        raise RecurrenceError("trace carries no radii")
    if log_r is None:
        if r is None or not r > 0:
            raise RecurrenceError("r must be positive")
        log_r = math.log(r)
    l4 = math.log(4.0) + float(log_r)
    lr = trace.log_rho
    if l4 > lr[0] + 1e-12 * max(1.0, abs(lr[0])):
        raise RecurrenceError("need 4 r <= rho_0")
    # lr is strictly decreasing; find last n with lr[n] >= l4
    # clamp: 4r may exceed rho_0 by rounding only
    n = max(int(np.searchsorted(-lr, -l4, side="right")) - 1, 0)
    if n + 1 >= len(trace):
        raise TraceExhausted("trace too short for this radius")
    return n, float(trace.omega[n + 1])


def index_bound_constant(trace: IterationTrace, n_lo: int = 10, n_hi: int = 10_000) -> float:
    """Largest ``gamma'`` with ``n^2 >= gamma' ln(rho_0/rho_n) / (1 - ln min{1, omega_0})``
    over the index window."""
    n_hi = min(n_hi, len(trace) - 1)
    n = np.arange(n_lo, n_hi + 1)
    decay = trace.log_rho[0] - trace.log_rho[n]
    scale = 1.0 - math.log(min(1.0, float(trace.omega[0])))
    return float(np.min(n.astype(float) ** 2 * scale / decay))


# --------------------------------------------------------------------------
# Fast geometric convergence
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class DeGiorgiParams:
    """Worst-case recursion ``Y_{n+1} = C b^n Y_n^{1+alpha}``.

    ``Y_0`` may be an ``mpmath.mpf`` so that a start exactly at the threshold
    is representable.
    """

    C: float
    b: float
    alpha: float
    Y_0: object

    def __post_init__(self):
        if not (self.C > 0 and self.b >= 1 and self.alpha > 0):
            raise RecurrenceError("need C > 0, b >= 1, alpha > 0")
        if not (0 < self.Y_0 <= 1):
            raise RecurrenceError("Y_0 must lie in (0, 1]")

    @classmethod
    def at_threshold(cls, C, b, alpha, n_max: int = 200):
        with mpmath.workdps(_dps(alpha, n_max)):
            y0 = degiorgi_threshold(C, b, alpha, as_mpf=True)
        return cls(C, b, alpha, min(y0, mpmath.mpf(1)))


@dataclass(frozen=True, eq=False)
class DeGiorgiResult:
    verdict: str            # CONVERGES | DIVERGED, from the closed-form threshold
    iterated: str           # CONVERGES | DIVERGED, from direct iteration
    log10_Y: np.ndarray     # computed trace, log10 scale (clamped at 300)
    bound_holds: bool       # Y_n <= b^{-n/alpha} Y_0 on the computed trace

    @property
    def Y(self) -> np.ndarray:
        return 10.0 ** self.log10_Y

    @property
    def agree(self) -> bool:
        return self.verdict == self.iterated


def _dps(alpha, n_max):
    # rounding errors relative to the threshold path grow like (1+alpha)^n
    return int(30 + n_max * math.log10(1.0 + alpha))


def degiorgi_threshold(C, b, alpha, as_mpf: bool = False):
    """``C^{-1/alpha} b^{-1/alpha^2}``."""
    C, b, alpha = mpmath.mpf(C), mpmath.mpf(b), mpmath.mpf(alpha)
    t = C ** (-1 / alpha) * b ** (-1 / alpha ** 2)
    return t if as_mpf else float(t)


def _iterate_logs(lnC, lnb, al, ly0, n_max, slack, clamp):
    """Log-space trace of the recursion in whatever number type is passed."""
    ly, logs, iterated, bound = ly0, [ly0], None, True
    grow, step = 1 + al, lnb / al
    shift, path = lnC, ly0 + slack          # lnC + n lnb and the bound path
    for _ in range(n_max):
        ly = shift + grow * ly
        shift += lnb
        path -= step
        if ly > clamp:
            logs.append(clamp)
            iterated = "DIVERGED"
            break
        logs.append(ly)
        if ly > path:
            bound = False
    if iterated is None:
        # below the threshold path with a non-increasing tail: converged;
        # above it the gap grows like (1+alpha)^n and the trace turns up
        tail_up = logs[-1] > logs[-2] if len(logs) > 1 else False
        iterated = "DIVERGED" if (tail_up or logs[-1] > ly0) else "CONVERGES"
    return logs, iterated, bound


def degiorgi_converges(d: DeGiorgiParams, n_max: int) -> DeGiorgiResult:
    """Iterate the recursion and compare with the closed-form threshold.

    In log form the distance from the threshold path is multiplied by
    ``1 + alpha`` each step, and so are rounding errors.  Starts whose log
    distance from the threshold exceeds 1e-9 are iterated in double
    precision.  Closer starts, including ``Y_0`` exactly on the threshold
    (where ``Y_n`` follows the unstable path ``Y_0 b^{-n/alpha}``), use a
    working precision that grows with ``n_max``.  Iteration stops with
    DIVERGED once ``Y_n > 1e300``; it is CONVERGES if the trace ends below
    ``Y_0`` and keeps decaying.
    """
    if n_max < 1:
        raise RecurrenceError("n_max must be >= 1")
    with mpmath.workdps(_dps(d.alpha, n_max)):
        thr = degiorgi_threshold(d.C, d.b, d.alpha, True)
        y0 = mpmath.mpf(d.Y_0)
        verdict = "CONVERGES" if y0 <= thr else "DIVERGED"
        gap = abs(float(mpmath.log(y0) - mpmath.log(thr)))
        if gap > 1e-9 and not isinstance(d.Y_0, mpmath.mpf):
            ly0 = math.log(float(y0))
            logs, iterated, bound = _iterate_logs(
                math.log(d.C), math.log(d.b), float(d.alpha), ly0, n_max,
                1e-12 * (1.0 + abs(ly0) + n_max * math.log(d.b)), _LOG_CLAMP)
            log10 = np.asarray(logs) / math.log(10.0)
        else:
            C, b, al = mpmath.mpf(d.C), mpmath.mpf(d.b), mpmath.mpf(d.alpha)
            logs, iterated, bound = _iterate_logs(
                mpmath.log(C), mpmath.log(b), al, mpmath.log(y0), n_max,
                mpmath.mpf(10) ** (-20), mpmath.mpf(_LOG_CLAMP))
            ln10 = mpmath.log(10)
            log10 = np.array([float(v / ln10) for v in logs])
    return DeGiorgiResult(verdict, iterated, log10, bool(bound))


# --------------------------------------------------------------------------
# Integer selections
# --------------------------------------------------------------------------

def jstar_select(gamma: float, N: int, p: float) -> int:
    """Smallest integer ``j`` with ``gamma 4^(N+2) / j^((p-1)/p) <= 1/2``."""
    if not gamma > 0 or p < 2:
        raise RecurrenceError("need gamma > 0 and p >= 2")
    e = (p - 1.0) / p

    def ok(j):
        return gamma * 4.0 ** (N + 2) / j ** e <= 0.5

    j = max(1, math.ceil((2.0 * gamma * 4.0 ** (N + 2)) ** (1.0 / e) * (1 - 1e-12)))
    while not ok(j):
        j += 1
    while j > 1 and ok(j - 1):
        j -= 1
    return j


def m_select(c1: float, xi_omega: float, N: int, p: float):
    """Smallest integer ``m`` with ``2^-m <= c1 (xi omega)^b``, ``b = 1 + (N+p)/p``.

    Returns ``(m, b)``.
    """
    b = 1.0 + (N + p) / p
    target = c1 * xi_omega ** b
    if not (0 < target):
        raise RecurrenceError("c1 (xi omega)^b must be positive")
    m = max(0, math.ceil(-math.log2(target) - 1e-12))
    while 2.0 ** (-m) > target:
        m += 1
    while m > 0 and 2.0 ** (-(m - 1)) <= target:
        m -= 1
    return m, b


def jstar_delta(c1: float, xi_omega: float, b: float, j_star: int) -> float:
    """``delta = (1/2) [c1 (xi omega)^b]^j_star``."""
    return 0.5 * (c1 * xi_omega ** b) ** j_star


# --------------------------------------------------------------------------
# Asymptotics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentFit:
    model: str
    c: float
    s: float
    residual: float
    n_lo: int
    n_hi: int


def asymptotic_exponent(trace: IterationTrace, model: str = "power-in-n",
                        n_range: tuple | None = None) -> ExponentFit:
    """Fit ``omega_n ~ c n^-s`` or ``c (ln n)^-s`` by least squares in logs.

    The window defaults to the tail half of the trace.
    """
    n_len = len(trace)
    if n_len < 100:
        raise RecurrenceError("trace length must be >= 100")
    lo, hi = n_range if n_range is not None else (n_len // 2, n_len - 1)
    lo, hi = max(int(lo), 2), min(int(hi), n_len - 1)
    n = np.arange(lo, hi + 1, dtype=float)
    w = trace.omega[lo:hi + 1]
    if np.any(w <= 0):
        raise RecurrenceError("non-positive omega in fit window")
    if model == "power-in-n":
        x = np.log(n)
    elif model == "log-in-n":
        x = np.log(np.log(n))
    else:
        raise RecurrenceError(f"unknown model {model!r}")
    y = np.log(w)
    if np.ptp(x) == 0:
        raise RecurrenceError("degenerate fit window")
    design = np.stack([np.ones_like(x), -x], axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    res = y - design @ coef
    return ExponentFit(model, float(np.exp(coef[0])), float(coef[1]),
                       float(np.sqrt(np.mean(res ** 2))), lo, hi)
