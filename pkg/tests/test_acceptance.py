"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from stefanlab.energy import Cutoff, caccioppoli_sides, make_level
from stefanlab.enthalpy import RegularizedEnthalpy
from stefanlab.geometry import IntrinsicCylinder, ShapeSpec, build_domain, certify_alpha_star
from stefanlab.modulus import (MODELS, Anchor, _predict_log, envelope_constant,
                               equicontinuity_sweep, fit_modulus, synthetic_series)
from stefanlab.recurrence import (DeGiorgiParams, NestingViolation, RecurrenceSpec,
                                  asymptotic_exponent, degiorgi_converges, degiorgi_threshold,
                                  invert_radius_to_index, iterate_boundary_scheme, iterate_type)
from stefanlab.solver import (BoundaryData, FluxModel, SolverConfig, max_principle_check,
                              solve, total_enthalpy)
from stefanlab.stefan1d import front_constant, front_position, interface_trajectory

import oracles
from benchmarks import L_SHAPE_SCHEDULE, l_shape_problem, stefan_problem


def _timed(fn, *a, **kw):
    t = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t


@pytest.fixture(scope="module")
def stefan_runs():
    """1D one-phase runs at h, h/2, h/4; values are (field, seconds)."""
    return {n: _timed(stefan_problem(n=n).run, 1e-3) for n in (512, 1024, 2048)}


@pytest.fixture(scope="module")
def l_shape_sweep():
    corner = Anchor((0.5, 0.5), 0.1, "lateral", "corner")
    return _timed(equicontinuity_sweep, l_shape_problem(), [0.1, 0.05, 0.025], [corner],
                  L_SHAPE_SCHEDULE, keep_fields=True)


def test_criterion_1_enthalpy_round_trip(criterion):
    t = time.perf_counter()
    s = np.random.default_rng(1).uniform(-5, 5, 10_000)
    worst = 0.0
    for nu in (0.5, 1.0, 2.0):
        for eps in (0.1, 0.01):
            r = RegularizedEnthalpy.make(nu, eps)
            worst = max(worst, float(np.max(np.abs(r.invert(r.beta(s)) - s))))
    dt = time.perf_counter() - t
    assert criterion(1, worst <= 1e-10 and dt < 1.0, f"max round-trip error {worst:.2e}", dt)


def test_criterion_2_geometry_certification(criterion):
    t = time.perf_counter()
    h, rho = 1 / 128, 1 / 8
    got = {kind: certify_alpha_star(build_domain(ShapeSpec(kind), h), [rho]).alpha_star
           for kind in ("rectangle", "l-shape")}
    dt = time.perf_counter() - t
    ok = (abs(got["rectangle"] - 0.5) <= 2 * h / rho and abs(got["l-shape"] - 0.25) <= 2 * h / rho
          and dt < 1.0)
    assert criterion(2, ok, f"alpha_star rectangle {got['rectangle']:.4f}, "
                            f"l-shape {got['l-shape']:.4f}", dt)


def test_criterion_3_stefan_front(criterion, stefan_runs):
    field, t_run = stefan_runs[512]
    t = time.perf_counter()
    lam = front_constant(1.0, 1.0)
    xf = interface_trajectory(field, 1.0)
    i = int(np.argmin(np.abs(field.times - 0.5)))
    exact = float(front_position(0.5, 1.0, 1.0))
    rel = abs(xf[i] - exact) / exact
    dt = t_run + time.perf_counter() - t
    ok = (abs(lam - oracles.STEFAN_LAMBDA) <= 1e-12 and field.times[i] == pytest.approx(0.5)
          and rel <= 0.02 and dt < 120)
    assert criterion(3, ok, f"front {xf[i]:.6f} vs 2 lambda sqrt(t) = {exact:.6f} "
                            f"(rel {rel:.2e})", dt)


def test_criterion_4_max_principle_and_conservation(criterion, stefan_runs, l_shape_sweep):
    t = time.perf_counter()
    margins = []
    for f, _ in stefan_runs.values():
        margins.append(max_principle_check(f, f.bc).margin)
    for f in l_shape_sweep[0].fields.values():
        margins.append(max_principle_check(f, f.bc).margin)
    g = build_domain(ShapeSpec("notched"), 1 / 32)
    bc = BoundaryData("neumann", u0=lambda x: np.where(x[:, 0] + x[:, 1] < 0.8, 1.0, -1.0))
    f = solve(g, SolverConfig(dt=1e-3), FluxModel(2), bc, RegularizedEnthalpy.make(1.0, 0.05),
              0.1)
    e = np.array([total_enthalpy(f, k) for k in range(f.n_samples)])
    drift = float(np.max(np.abs(e - e[0])) / (np.sum(np.abs(f.w[0])) * g.cell_volume))
    dt = time.perf_counter() - t
    ok = max(margins) <= 1e-10 and f.n_samples == 101 and drift <= 1e-8
    assert criterion(4, ok, f"worst margin {max(margins):.2e} over {len(margins)} Dirichlet runs, "
                            f"Neumann drift {drift:.2e} per 100 steps", dt)


def test_criterion_5_degiorgi(criterion):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    disagree = bound_fail = 0
    for _ in range(1000):
        C, b = rng.uniform(1, 10), rng.uniform(1, 8)
        alpha = float(rng.choice([0.5, 1.0, 2.0]))
        thr = degiorgi_threshold(C, b, alpha)
        y0 = min(1.0, thr * 10 ** rng.uniform(-1, 1))
        disagree += not degiorgi_converges(DeGiorgiParams(C, b, alpha, y0), 200).agree
        at = degiorgi_converges(DeGiorgiParams.at_threshold(C, b, alpha, 200), 200)
        bound_fail += not (at.bound_holds and at.agree)
    dt = time.perf_counter() - t
    ok = disagree == 0 and bound_fail == 0 and dt < 5.0
    assert criterion(5, ok, f"{disagree} verdict mismatches, {bound_fail} threshold bound "
                            f"failures in 1000 triples", dt)


def test_criterion_6_recurrence_asymptotics(criterion):
    t = time.perf_counter()
    tr = iterate_type(RecurrenceSpec("TypeII", eta=0.5, q=1), 0.5, 10 ** 6)
    nw = 1e6 * tr.omega[-1]
    s = {1: asymptotic_exponent(tr).s}
    s[2] = asymptotic_exponent(iterate_type(RecurrenceSpec("TypeII", eta=0.5, q=2), 0.5,
                                            10 ** 6)).s
    s1 = {q: asymptotic_exponent(iterate_type(RecurrenceSpec("TypeI", q=q), 0.5, 10 ** 6),
                                 "log-in-n", (10 ** 4, 10 ** 6)).s for q in (1, 2)}
    dt = time.perf_counter() - t
    ok = (abs(nw - 2) <= 0.1 and all(abs(s[q] * q - 1) <= 0.02 for q in (1, 2))
          and all(abs(s1[q] * q - 1) <= 0.2 for q in (1, 2)) and dt < 10)
    assert criterion(6, ok, f"n omega_n = {nw:.5f}; TypeII s = {s[1]:.4f}, {s[2]:.4f}; "
                            f"TypeI s = {s1[1]:.3f}, {s1[2]:.3f} (q = 1, 2)", dt)


def test_criterion_7_boundary_scheme(criterion):
    t = time.perf_counter()
    nested = True
    for p in (2.0, 3.0):
        try:
            iterate_boundary_scheme(RecurrenceSpec("BoundaryD", p=p, C_g=0.1, lam=2.0),
                                    0.5, 0.5, n_max=10 ** 4)
        except NestingViolation:
            nested = False
    rho0 = 0.5
    tr = iterate_boundary_scheme(RecurrenceSpec("BoundaryD", p=2, q=1, eta=0.5, C_g=0.1,
                                                lam=2.0), 0.5, rho0, n_max=10 ** 5)
    log_r = np.linspace(math.log(rho0 / 4), tr.log_rho[-1] - math.log(4) + 1e-9, 60)
    osc = np.array([invert_radius_to_index(tr, log_r=v)[1] for v in log_r])
    series = synthetic_series(log_r, osc, rho_bar=rho0)
    env_res = {}
    fits = {}
    for m in ("TypeII", "Hoelder"):
        f = fits[m] = fit_modulus(series, m)
        env = np.log(envelope_constant(series, f) / f.C * f.predict(log_r))
        env_res[m] = float(np.sqrt(np.mean((env - np.log(osc)) ** 2)))
    dt = time.perf_counter() - t
    ok = (nested and fits["TypeII"].exponent > 0 and env_res["TypeII"] < env_res["Hoelder"]
          and dt < 10)
    assert criterion(7, ok, f"sigma' = {fits['TypeII'].exponent:.3f}; envelope residual "
                            f"TypeII {env_res['TypeII']:.3f} vs Hoelder "
                            f"{env_res['Hoelder']:.3f}", dt)


def test_criterion_8_energy_stability(criterion, stefan_runs):
    t = time.perf_counter()
    cyl = IntrinsicCylinder((0.7,), 0.5, 0.25, 1.0, 2.0)
    gam = {}
    for n, (f, _) in sorted(stefan_runs.items()):
        for sigma in (0.5, 0.75):
            for a in (0.25, 0.5, 0.75):
                lev = make_level(f, cyl, "plus", a=a)
                rep = caccioppoli_sides(f, FluxModel(2), lev, Cutoff("space-time", sigma),
                                        "sign-restricted-2.2", cyl)
                gam.setdefault((sigma, a), []).append(rep.gamma_observed)
    worst = max(max(v) / min(v) for v in gam.values())
    finite = all(0 < g < np.inf for v in gam.values() for g in v)
    dt = sum(s for _, s in stefan_runs.values()) + time.perf_counter() - t
    ok = finite and worst <= 2.0 and dt < 600
    assert criterion(8, ok, f"worst gamma ratio across h, h/2, h/4: {worst:.4f} "
                            f"({len(gam)} cutoff/level pairs)", dt)


def test_criterion_9_equicontinuity(criterion, l_shape_sweep):
    rep, dt = l_shape_sweep
    sp = rep.spread["corner"]
    d = rep.consecutive_distances()
    ok = sp["C"] <= 0.10 and sp["s"] <= 0.10 and rep.distances_nonincreasing and dt < 1800
    assert criterion(9, ok, f"spread C {sp['C']:.2%}, s {sp['s']:.2%}; consecutive sup "
                            f"distances {', '.join(f'{v:.4f}' for v in d)}", dt)


def test_criterion_10_fit_recovery(criterion):
    t = time.perf_counter()
    rng = np.random.default_rng(10)
    worst = 0.0
    for model in MODELS:
        log_r = -np.geomspace(5.0, 30.0 if model == "Hoelder" else 500.0, 12)
        for _ in range(20):
            C, s = rng.uniform(0.1, 5.0), rng.uniform(0.1, 2.0)
            osc = np.exp(_predict_log(model, C, s, 1.0, log_r))
            f = fit_modulus(synthetic_series(log_r, osc), model)
            worst = max(worst, abs(f.C / C - 1), abs(f.exponent / s - 1))
    dt = time.perf_counter() - t
    assert criterion(10, worst <= 1e-6 and dt < 1.0,
                     f"worst relative parameter error {worst:.2e} over 60 draws", dt)
