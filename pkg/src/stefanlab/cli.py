"""Command-line experiment runner.

Every subcommand reads a JSON configuration, writes CSV files and a
``manifest.json`` into the output directory and exits 0.  On failure it
writes ``failure.json`` and exits nonzero (2 invalid config, 3 solver
failure, 4 analysis failure).
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import mpmath
import numpy as np
import scipy

from . import __version__
from .catalog import CatalogError, make_data
from .checkpoint import write_checkpoint
from .config import ConfigInvalid, config_hash, load_config
from .energy import Cutoff, EnergyError, REPORT_COLUMNS, caccioppoli_sides, make_level, \
    neumann_energy_sides
from .enthalpy import biweight_kernel, triweight_kernel
from .geometry import GeometryError, IntrinsicCylinder, ShapeSpec, build_domain, \
    certify_alpha_star
from .modulus import MODELS, Anchor, ModulusError, compare_models, envelope_constant, \
    equicontinuity_sweep, measure_oscillation
from .recurrence import RecurrenceError, RecurrenceSpec, iterate_boundary_scheme, \
    iterate_interior_scheme, iterate_neumann_scheme, iterate_type
from .solver import BoundaryData, FluxModel, Problem, SolverConfig, SolverError, \
    max_principle_check, total_enthalpy
from .stefan1d import front_constant, front_position, interface_trajectory

EXIT_CONFIG, EXIT_SOLVER, EXIT_ANALYSIS = 2, 3, 4


class AnalysisFailure(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


class Run:
    """Output directory, timers and manifest for one invocation."""

    def __init__(self, out: Path, command: str, cfg: dict | None, seed: int):
        self.out = out
        self.out.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.cfg = cfg
        self.seed = seed
        self.timings = {}
        self.files = []
        self.summary = {}
        self._t0 = time.perf_counter()

    def timed(self, key, fn, *a, **kw):
        t = time.perf_counter()
        out = fn(*a, **kw)
        self.timings[key] = self.timings.get(key, 0.0) + time.perf_counter() - t
        return out

    def csv(self, name, header, rows):
        write_csv(self.out / name, header, rows)
        self.files.append(name)

    def manifest(self, status="ok", failure=None):
        m = {
            "command": self.command,
            "status": status,
            "config_hash": config_hash(self.cfg) if self.cfg else None,
            "seed": self.seed,
            "versions": {"stefanlab": __version__, "python": platform.python_version(),
                         "numpy": np.__version__, "scipy": scipy.__version__,
                         "mpmath": mpmath.__version__},
            "timings_s": {**self.timings, "total": time.perf_counter() - self._t0},
            "files": self.files,
            "summary": self.summary,
        }
        if failure is not None:
            m["failure"] = failure
        name = "manifest.json" if status == "ok" else "failure.json"
        (self.out / name).write_text(json.dumps(m, indent=2, sort_keys=True) + "\n")
        return m


# --------------------------------------------------------------------------
# Building objects from a configuration
# --------------------------------------------------------------------------

def build_grid(cfg):
    pr, so = cfg["problem"], cfg["solver"]
    d = pr["domain"]
    kw = {k: d[k] for k in ("notch_width", "notch_depth", "notch_center") if k in d}
    size = tuple(d.get("size", (1.0,) if d["kind"] == "interval" else (1.0, 1.0)))
    grid = build_domain(ShapeSpec(d["kind"], size=size, **kw), so["h"])
    rho_list = cfg.get("analysis", {}).get("rho_list")
    if rho_list:
        grid = certify_alpha_star(grid, rho_list)
    return grid


def build_problem(cfg, stride: int | None = None) -> Problem:
    pr, so = cfg["problem"], cfg["solver"]
    grid = build_grid(cfg)
    b = pr["bc"]
    u0 = make_data(b["u0"])
    g = make_data(b["g"]) if "g" in b else None
    psi = make_data(b["psi"]) if "psi" in b else None
    bc = BoundaryData(
        b["kind"], u0=lambda x: u0(x, 0.0),
        g=(lambda x, t: g(x, t)) if g is not None else None,
        psi=(lambda x, t, u: psi(x, t)) if psi is not None else None,
        C2=b.get("C2", 0.0),
        omega_g=g.modulus if g is not None else None,
        omega_o=u0.modulus)
    flux = FluxModel(p=pr["p"], grad_floor=pr.get("grad_floor", 0.0))
    scfg = SolverConfig(dt=so["dt"], newton_tol=so.get("newton_tol", 1e-10),
                        max_iters=so.get("max_iters", 50),
                        linearization=so.get("linearization", "newton"))
    kernel = triweight_kernel() if pr.get("kernel") == "triweight" else biweight_kernel()
    if stride is None:
        stride = cfg.get("output", {}).get("stride", 1)
    return Problem(grid, bc, flux, scfg, pr["nu"], pr["T_final"], kernel, stride)


def eps_values(cfg):
    pr = cfg["problem"]
    return list(pr["eps_list"]) if "eps_list" in pr else [pr["eps"]]


def anchors(cfg):
    return [Anchor(tuple(a["x"]), a["t"], a["kind"], a["id"])
            for a in cfg.get("analysis", {}).get("anchors", [])]


# --------------------------------------------------------------------------
# Stages
# --------------------------------------------------------------------------

def stage_solve(run: Run, cfg, problem: Problem, eps: float, tag: str):
    field = run.timed("solve", problem.run, eps)
    if problem.bc.kind == "dirichlet":
        mp = max_principle_check(field, problem.bc)
        run.summary[f"max_principle{tag}"] = {"bound": mp.bound, "max_abs_u": mp.max_abs_u,
                                              "margin": mp.margin, "passed": mp.passed}
    else:
        e0, e1 = total_enthalpy(field, 0), total_enthalpy(field, field.n_samples - 1)
        run.summary[f"total_enthalpy{tag}"] = {"initial": e0, "final": e1}
    rng = np.random.default_rng(run.seed)
    ratios = problem.bc.check_moduli(problem.grid, problem.T_final, rng)
    if ratios:
        run.summary[f"data_moduli{tag}"] = ratios
    ana = cfg.get("analysis", {})
    if "interface" in ana and problem.grid.dim == 1:
        left = ana["interface"].get("left_value")
        xf = interface_trajectory(field, left)
        T_L = ana["interface"].get("T_L")
        header = ["t[time]", "x_front[length]"]
        rows = [[t, x] for t, x in zip(field.times, xf)]
        if T_L is not None:
            lam = front_constant(T_L, problem.nu)
            header.append("x_similarity[length]")
            rows = [r + [float(front_position(r[0], T_L, problem.nu))] for r in rows]
            run.summary[f"front{tag}"] = {"lambda": lam, "x_final": float(xf[-1]),
                                          "x_similarity_final": rows[-1][2]}
        run.csv(f"interface{tag}.csv", header, rows)
    if ana.get("checkpoint"):
        name = f"checkpoint{tag}.bin"
        write_checkpoint(run.out / name, field, config_hash(cfg))
        run.files.append(name)
    return field


def stage_measure(run: Run, cfg, field, tag: str):
    ana = cfg.get("analysis", {})
    sched = ana.get("schedule")
    ans = anchors(cfg)
    if not ans or not sched:
        return
    series_rows, fit_rows = [], []
    for an in ans:
        try:
            s = run.timed("measure", measure_oscillation, field, an, sched, field.flux.p,
                          ana.get("xi", 1.0))
        except (ModulusError, GeometryError) as exc:
            raise AnalysisFailure(f"anchor {an.anchor_id}: {exc}") from exc
        series_rows.extend(s.rows())
        if len(s) >= 4 and np.all(s.osc > 0):
            rank = compare_models(s)
            for m in MODELS:
                if m in rank.fits:
                    f = rank.fits[m]
                    fit_rows.append([an.anchor_id, m, f.C, f.exponent, f.residual,
                                     envelope_constant(s, f), rank.order.index(m) + 1])
    run.csv(f"oscillation{tag}.csv",
            ["anchor_id", "kind", "r[length]", "theta[1]", "osc[temperature]"], series_rows)
    run.csv(f"fits{tag}.csv",
            ["anchor_id", "model", "C[temperature]", "exponent[1]", "residual[ln temperature]",
             "C_envelope[temperature]", "rank[1]"], fit_rows)


_ENERGY_UNITS = {"variant": "", "sign": "", "cutoff_kind": "", "k": "[temperature]",
                 "sigma": "[1]", "x_o": "[length]", "t_o": "[time]", "rho": "[length]",
                 "theta": "[1]", "gamma_observed": "[1]", "degenerate": "[flag]"}


def stage_energy(run: Run, cfg, problem: Problem, field, tag: str):
    items = cfg.get("analysis", {}).get("energy", [])
    if not items:
        return
    rows = []
    for e in items:
        x = tuple(e["x"])
        cyl = IntrinsicCylinder(x, e["t"], e["rho"], e.get("theta", 1.0), problem.flux.p)
        cut = Cutoff(e.get("cutoff", "space-time"), e.get("sigma", 0.5))
        try:
            lev = make_level(field, cyl, e["sign"], a=e["a"])
            if e["variant"] == "neumann-6.1":
                rep = neumann_energy_sides(field, problem.flux, lev, cut, cyl, problem.bc.C2)
            else:
                rep = caccioppoli_sides(field, problem.flux, lev, cut, e["variant"], cyl)
        except (EnergyError, GeometryError) as exc:
            raise AnalysisFailure(f"energy item {e}: {exc}") from exc
        rows.append(rep.row())
    header = [f"{c}{_ENERGY_UNITS.get(c, '[energy]')}" for c in REPORT_COLUMNS]
    run.csv(f"energy{tag}.csv", header, rows)


_ITER = {"TypeI": "type", "TypeII": "type", "BoundaryD": iterate_boundary_scheme,
         "Interior": iterate_interior_scheme, "NeumannN": iterate_neumann_scheme}


def stage_recur(run: Run, cfg):
    items = cfg.get("analysis", {}).get("recurrence", [])
    for it in items:
        try:
            spec = RecurrenceSpec(**it["spec"])
            n_max = it.get("n_max", 1000)
            if spec.scheme in ("TypeI", "TypeII"):
                tr = run.timed("recur", iterate_type, spec, it["omega0"], n_max)
            else:
                tr = run.timed("recur", _ITER[spec.scheme], spec, it["omega0"],
                               it.get("rho0", 1.0), r_stop=it.get("r_stop"), n_max=n_max)
        except (RecurrenceError, TypeError) as exc:
            raise AnalysisFailure(f"recurrence {it['id']}: {exc}") from exc
        rows = [[n, om, rho, th, tt] for n, om, rho, _, th, tt in tr.rows()]
        run.csv(f"trace_{it['id']}.csv",
                ["n[1]", "omega[temperature]", "rho[length]", "theta[1]", "theta_tilde[1]"],
                rows)
        run.summary[f"trace_{it['id']}"] = {"length": len(tr), "reason": tr.reason}


def stage_sweep(run: Run, cfg, problem: Problem):
    ana = cfg.get("analysis", {})
    ans = anchors(cfg)
    if not ans or not ana.get("schedule"):
        raise AnalysisFailure("sweep needs anchors and a schedule")
    try:
        rep = run.timed("sweep", equicontinuity_sweep, problem, eps_values(cfg), ans,
                        ana["schedule"], problem.flux.p, ana.get("xi", 1.0))
    except ModulusError as exc:
        raise AnalysisFailure(str(exc)) from exc
    rows = []
    for (e, aid), f in sorted(rep.fits.items()):
        rows.append([e, aid, f.C, f.exponent, f.residual])
    run.csv("sweep_fits.csv", ["eps[temperature]", "anchor_id", "C[temperature]",
                               "exponent[1]", "residual[ln temperature]"], rows)
    run.csv("sweep_distances.csv", ["eps_a[temperature]", "eps_b[temperature]",
                                    "sup_abs_diff[temperature]"],
            [[a, b, d] for (a, b), d in sorted(rep.distances.items())])
    series_rows = []
    for (e, aid), s in sorted(rep.series.items()):
        series_rows.extend([[e, *r] for r in s.rows()])
    run.csv("sweep_oscillation.csv", ["eps[temperature]", "anchor_id", "kind", "r[length]",
                                      "theta[1]", "osc[temperature]"], series_rows)
    run.summary["sweep"] = {"spread": rep.spread,
                            "distances_nonincreasing": rep.distances_nonincreasing}


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def _per_eps(run, cfg, problem, stages):
    eps = eps_values(cfg)
    for e in eps:
        tag = "" if len(eps) == 1 else f"_eps{e!r}"
        field = stage_solve(run, cfg, problem, e, tag)
        if "measure" in stages:
            stage_measure(run, cfg, field, tag)
        if "energy" in stages:
            stage_energy(run, cfg, problem, field, tag)


def cmd_run(run, cfg, problem):
    _per_eps(run, cfg, problem, ("measure", "energy"))
    stage_recur(run, cfg)


def cmd_solve(run, cfg, problem):
    _per_eps(run, cfg, problem, ())


def cmd_measure(run, cfg, problem):
    _per_eps(run, cfg, problem, ("measure",))


def cmd_energy(run, cfg, problem):
    _per_eps(run, cfg, problem, ("energy",))


def cmd_recur(run, cfg, problem):
    stage_recur(run, cfg)


def cmd_sweep(run, cfg, problem):
    stage_sweep(run, cfg, problem)


COMMANDS = {"run": cmd_run, "solve": cmd_solve, "measure": cmd_measure,
            "energy-check": cmd_energy, "recur": cmd_recur, "sweep": cmd_sweep}


def cmd_oracle_stefan1d(args) -> int:
    out = Path(args.out)
    run = Run(out, "oracle stefan1d", None, args.seed)
    lam = front_constant(args.T_L, args.nu)
    times = np.linspace(0.0, args.T, args.n + 1)[1:]
    run.csv("stefan1d_reference.csv", ["t[time]", "x_front[length]", "lambda[1]"],
            [[t, float(front_position(t, args.T_L, args.nu)), lam] for t in times])
    run.summary["lambda"] = lam
    run.manifest()
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stefanlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="experiment JSON file")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=0,
                        help="seed for random data-modulus check pairs")
        sp.add_argument("--stride", type=int, default=None, help="store every K-th step")
    orc = sub.add_parser("oracle")
    osub = orc.add_subparsers(dest="oracle", required=True)
    st = osub.add_parser("stefan1d", help="similarity-solution reference table")
    st.add_argument("--out", default="stefan1d_oracle")
    st.add_argument("--T-L", dest="T_L", type=float, default=1.0)
    st.add_argument("--nu", type=float, default=1.0)
    st.add_argument("--T", type=float, default=0.5)
    st.add_argument("--n", type=int, default=50)
    st.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "oracle":
        return cmd_oracle_stefan1d(args)
    out = Path(args.out) if args.out else None
    try:
        cfg = load_config(args.config)
    except (ConfigInvalid, OSError) as exc:
        violations = exc.violations if isinstance(exc, ConfigInvalid) else [str(exc)]
        run = Run(out or Path("."), args.command, None, args.seed)
        run.manifest("failed", {"kind": "config-invalid", "violations": violations})
        for v in violations:
            print(f"config-invalid: {v}", file=sys.stderr)
        return EXIT_CONFIG
    out = out or Path(cfg.get("output", {}).get("directory", "out"))
    if args.stride is not None and args.stride < 1:
        print("--stride must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(out, args.command, cfg, args.seed)
    try:
        problem = build_problem(cfg, args.stride)
        COMMANDS[args.command](run, cfg, problem)
    except (CatalogError, GeometryError, ValueError) as exc:
        if isinstance(exc, (EnergyError, ModulusError, RecurrenceError)):
            kind, code = "analysis-failure", EXIT_ANALYSIS
        else:
            kind, code = "config-invalid", EXIT_CONFIG
        run.manifest("failed", {"kind": kind, "message": str(exc)})
        print(f"{kind}: {exc}", file=sys.stderr)
        return code
    except SolverError as exc:
        run.manifest("failed", {"kind": "solver-failure", "message": str(exc)})
        print(f"solver-failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except AnalysisFailure as exc:
        run.manifest("failed", {"kind": "analysis-failure", "message": str(exc)})
        print(f"analysis-failure: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    run.manifest()
    return 0


if __name__ == "__main__":
    sys.exit(main())
