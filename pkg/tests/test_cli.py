import copy
import csv
import json

import numpy as np
import pytest

from stefanlab.catalog import CATALOG, CatalogError, make_data
from stefanlab.checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from stefanlab.cli import build_problem, main
from stefanlab.config import ConfigInvalid, config_hash, load_config, validate_config
from stefanlab.stefan1d import front_position

from pathlib import Path

BENCH = Path(__file__).resolve().parents[1] / "src" / "stefanlab" / "benchmarks"
GOLDEN = Path(__file__).resolve().parent / "golden"

SMALL = {
    "name": "two-phase interval, coarse",
    "problem": {
        "domain": {"kind": "interval", "size": [1.0]},
        "p": 2, "nu": 1.0, "eps": 0.05,
        "bc": {"kind": "dirichlet",
               "u0": [{"name": "linear_ramp", "params": {"slope": [-1.0], "offset": 0.5}},
                      {"name": "sine_product", "params": {"amplitude": 0.3, "size": [1.0]}}],
               "g": {"name": "linear_ramp", "params": {"slope": [-1.0], "offset": 0.5}}},
        "T_final": 0.02,
    },
    "solver": {"h": 0.015625, "dt": 0.001},
    "analysis": {
        "anchors": [{"id": "mid", "x": [0.5], "t": 0.02, "kind": "interior"},
                    {"id": "wall", "x": [0.0], "t": 0.02, "kind": "lateral"}],
        "schedule": [0.125, 0.0625, 0.046875, 0.03125],
        "energy": [{"variant": "sign-restricted-2.2", "sign": "plus", "a": 0.5,
                    "x": [0.5], "t": 0.02, "rho": 0.125}],
        "recurrence": [{"id": "t2", "spec": {"scheme": "TypeII"}, "omega0": 0.5,
                        "n_max": 50}],
        "checkpoint": True,
    },
    "output": {"directory": "unused", "stride": 1},
}


def write_cfg(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---- configuration -------------------------------------------------------

def test_small_config_valid_and_bundled_configs_load():
    validate_config(copy.deepcopy(SMALL))
    for f in sorted(BENCH.glob("*.cfg")):
        load_config(f)


def test_p_below_two_rejected():
    cfg = copy.deepcopy(SMALL)
    cfg["problem"]["p"] = 1.5
    with pytest.raises(ConfigInvalid) as ei:
        validate_config(cfg)
    assert any(v.startswith("problem.p") for v in ei.value.violations)


def test_every_violation_listed():
    cfg = copy.deepcopy(SMALL)
    cfg["problem"]["p"] = 1.5
    cfg["solver"]["dt"] = -1
    cfg["problem"]["colour"] = "blue"
    with pytest.raises(ConfigInvalid) as ei:
        validate_config(cfg)
    v = ei.value.violations
    assert len(v) == 3
    assert any("colour" in s for s in v)


def test_semantic_checks():
    cfg = copy.deepcopy(SMALL)
    del cfg["problem"]["eps"]
    cfg["analysis"]["schedule"] = [0.1, 0.2]
    cfg["problem"]["domain"]["size"] = [1.0, 1.0]
    with pytest.raises(ConfigInvalid) as ei:
        validate_config(cfg)
    assert len(ei.value.violations) == 3
    cfg = copy.deepcopy(SMALL)
    cfg["problem"]["bc"] = {"kind": "neumann", "u0": 0.0}
    cfg["problem"]["p"] = 3
    with pytest.raises(ConfigInvalid):
        validate_config(cfg)


def test_config_hash_ignores_output_directory_only():
    a = copy.deepcopy(SMALL)
    b = copy.deepcopy(SMALL)
    b["output"]["directory"] = "elsewhere"
    assert config_hash(a) == config_hash(b)
    b["solver"]["dt"] = 0.002
    assert config_hash(a) != config_hash(b)
    assert len(config_hash(a)) == 64


def test_malformed_json_reported(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ConfigInvalid):
        load_config(p)


# ---- catalog -------------------------------------------------------------

def test_catalog_values():
    x = np.array([[0.25], [0.75]])
    assert np.all(make_data(2.5)(x) == 2.5)
    ramp = make_data({"name": "linear_ramp", "params": {"slope": [2.0], "offset": 1.0,
                                                        "rate": 3.0}})
    np.testing.assert_allclose(ramp(x, 0.5), [3.0, 4.0])
    pw = make_data({"name": "piecewise_x", "params": {"split": 0.5, "left": 1, "right": -1}})
    np.testing.assert_array_equal(pw(x), [1.0, -1.0])
    assert pw.modulus is None
    total = make_data([{"name": "constant", "params": {"value": 1.0}},
                       {"name": "linear_ramp", "params": {"slope": [1.0]}}])
    np.testing.assert_allclose(total(x), [1.25, 1.75])
    assert total.modulus(0.1) == pytest.approx(0.1)


@pytest.mark.parametrize("name", ["linear_ramp", "log_modulus", "sine_product"])
def test_declared_modulus_holds(name):
    params = {"log_modulus": {"center": [0.3, 0.4], "lam": 2.0, "R0": 1.0},
              "sine_product": {"amplitude": 0.7}, "linear_ramp": {"slope": [1.0, -2.0]}}[name]
    f = make_data({"name": name, "params": params})
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 1, (2000, 2))
    y = np.clip(x + rng.normal(0, 0.05, x.shape), 0, 1)
    d = np.max(np.abs(x - y), axis=1)
    assert np.all(np.abs(f(x) - f(y)) <= f.modulus(d) * (1 + 1e-12) + 1e-15)


def test_log_modulus_is_logarithmic_at_centre():
    f = make_data({"name": "log_modulus", "params": {"center": [0.0], "lam": 1.0, "R0": 1.0}})
    r = np.array([1e-4, 1e-8])
    np.testing.assert_allclose(f.modulus(r), 1.0 / np.log(1.0 / r))


def test_catalog_errors():
    assert set(CATALOG) >= {"constant", "linear_ramp", "piecewise_x", "log_modulus"}
    with pytest.raises(CatalogError):
        make_data({"name": "nope"})
    with pytest.raises(CatalogError):
        make_data({"name": "constant", "params": {"bogus": 1}})
    with pytest.raises(CatalogError):
        make_data([])


# ---- checkpoint ----------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    field = build_problem(copy.deepcopy(SMALL)).run(0.05)
    p = write_checkpoint(tmp_path / "c.bin", field, "abc")
    cp = read_checkpoint(p)
    assert cp.header["config_hash"] == "abc"
    np.testing.assert_array_equal(cp.u, field.u)
    np.testing.assert_array_equal(cp.w, field.w)
    np.testing.assert_array_equal(cp.times, field.times)
    raw = p.read_bytes()
    (tmp_path / "t.bin").write_bytes(raw[:-8])
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "t.bin")


# ---- runner --------------------------------------------------------------

def test_run_writes_artifacts(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(write_cfg(tmp_path, SMALL)), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok"
    assert man["config_hash"] == config_hash(SMALL)
    assert man["summary"]["max_principle"]["passed"]
    assert set(man["files"]) >= {"oscillation.csv", "fits.csv", "energy.csv", "trace_t2.csv",
                                 "checkpoint.bin"}
    for name in man["files"]:
        if name.endswith(".csv"):
            header = read_rows(out / name)[0]
            labels = ("anchor_id", "kind", "model", "variant", "sign", "cutoff_kind")
            assert all(h.endswith("]") for h in header if h not in labels), header


def test_rerun_is_byte_identical(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", "--config", str(cfg), "--out", str(tmp_path / "b")])
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    assert names
    for n in names + ["checkpoint.bin"]:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_stride_flag(tmp_path):
    out = tmp_path / "o"
    cfg = copy.deepcopy(SMALL)
    cfg["analysis"] = {"checkpoint": True}
    assert main(["solve", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(out),
                 "--stride", "5"]) == 0
    cp = read_checkpoint(out / "checkpoint.bin")
    np.testing.assert_allclose(cp.times, [0.0, 0.005, 0.01, 0.015, 0.02])


def test_invalid_config_exit_and_failure_record(tmp_path, capsys):
    cfg = copy.deepcopy(SMALL)
    cfg["problem"]["p"] = 1.5
    cfg["solver"]["h"] = 0
    out = tmp_path / "o"
    code = main(["run", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(out)])
    assert code == 2
    fail = json.loads((out / "failure.json").read_text())
    assert fail["failure"]["kind"] == "config-invalid"
    assert len(fail["failure"]["violations"]) == 2
    assert not (out / "manifest.json").exists()
    assert "config-invalid" in capsys.readouterr().err


def test_solver_failure_exit(tmp_path):
    cfg = copy.deepcopy(SMALL)
    cfg["solver"].update({"max_iters": 1, "newton_tol": 1e-300})
    out = tmp_path / "o"
    assert main(["solve", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(out)]) == 3
    assert json.loads((out / "failure.json").read_text())["failure"]["kind"] == "solver-failure"


def test_analysis_failure_exit(tmp_path):
    cfg = copy.deepcopy(SMALL)
    cfg["analysis"]["schedule"] = [0.125, 0.01]      # below 2h
    out = tmp_path / "o"
    assert main(["measure", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(out)]) == 4


def test_recur_subcommand(tmp_path):
    cfg = copy.deepcopy(SMALL)
    cfg["analysis"]["recurrence"].append(
        {"id": "bd", "spec": {"scheme": "BoundaryD", "p": 2}, "omega0": 0.5, "rho0": 0.5,
         "n_max": 20})
    out = tmp_path / "o"
    assert main(["recur", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(out)]) == 0
    rows = read_rows(out / "trace_bd.csv")
    assert rows[0][0] == "n[1]" and len(rows) == 22
    assert float(rows[2][2]) < float(rows[1][2])


def test_sweep_subcommand(tmp_path):
    cfg = copy.deepcopy(SMALL)
    del cfg["problem"]["eps"]
    cfg["problem"]["eps_list"] = [0.1, 0.05, 0.025]
    cfg["analysis"]["anchors"] = cfg["analysis"]["anchors"][:1]
    out = tmp_path / "o"
    assert main(["sweep", "--config", str(write_cfg(tmp_path, cfg)), "--out", str(out)]) == 0
    assert len(read_rows(out / "sweep_distances.csv")) == 4
    assert len(read_rows(out / "sweep_fits.csv")) == 4


def test_oracle_table(tmp_path):
    out = tmp_path / "o"
    assert main(["oracle", "stefan1d", "--out", str(out), "--n", "5"]) == 0
    rows = read_rows(out / "stefan1d_reference.csv")
    assert rows[0] == ["t[time]", "x_front[length]", "lambda[1]"]
    assert len(rows) == 6
    assert float(rows[-1][1]) == pytest.approx(front_position(0.5, 1.0, 1.0), rel=1e-14)


def test_bundled_one_phase_matches_golden(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", str(BENCH / "one_phase_1d.cfg"), "--out", str(out)]) == 0
    got, want = read_rows(out / "interface.csv"), read_rows(GOLDEN / "one_phase_1d_interface.csv")
    assert got[0] == want[0]
    np.testing.assert_allclose(np.array(got[1:], float), np.array(want[1:], float),
                               rtol=1e-12, atol=1e-14)
    assert json.loads((out / "manifest.json").read_text())["files"] == ["interface.csv"]
