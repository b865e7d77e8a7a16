"""Experiment configuration: JSON schema, validation and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema

__all__ = ["ConfigInvalid", "SCHEMA", "load_config", "validate_config", "config_hash"]


class ConfigInvalid(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_POINT = {"type": "array", "items": _NUM, "minItems": 1, "maxItems": 2}

_ENTRY = _obj({"name": {"enum": ["constant", "linear_ramp", "piecewise_x", "log_modulus",
                                  "sine_product"]},
               "params": {"type": "object"}}, ["name"])
_DATA = {"oneOf": [_NUM, _ENTRY, {"type": "array", "items": _ENTRY, "minItems": 1}]}

_DOMAIN = _obj({
    "kind": {"enum": ["interval", "rectangle", "l-shape", "notched"]},
    "size": {"type": "array", "items": _POS, "minItems": 1, "maxItems": 2},
    "notch_width": _POS,
    "notch_depth": _POS,
    "notch_center": _NUM,
}, ["kind"])

_PROBLEM = _obj({
    "domain": _DOMAIN,
    "p": {"type": "number", "minimum": 2},
    "nu": {"type": "number", "minimum": 0},
    "eps": _POS,
    "eps_list": {"type": "array", "items": _POS, "minItems": 1},
    "kernel": {"enum": ["biweight", "triweight"]},
    "grad_floor": {"type": "number", "minimum": 0},
    "bc": _obj({
        "kind": {"enum": ["dirichlet", "neumann"]},
        "u0": _DATA,
        "g": _DATA,
        "psi": _DATA,
        "C2": {"type": "number", "minimum": 0},
    }, ["kind", "u0"]),
    "T_final": _POS,
}, ["domain", "p", "nu", "bc", "T_final"])

_SOLVER = _obj({
    "h": _POS,
    "dt": _POS,
    "newton_tol": _POS,
    "max_iters": {"type": "integer", "minimum": 1},
    "linearization": {"enum": ["picard", "newton"]},
}, ["h", "dt"])

_ANCHOR = _obj({
    "id": {"type": "string"},
    "x": _POINT,
    "t": {"type": "number", "minimum": 0},
    "kind": {"enum": ["lateral", "interior", "initial"]},
}, ["id", "x", "t", "kind"])

_ENERGY = _obj({
    "variant": {"enum": ["interior-2.1", "sign-restricted-2.2", "singular-2.3",
                         "appendix-A.1", "neumann-6.1"]},
    "sign": {"enum": ["plus", "minus"]},
    "a": {"type": "number", "minimum": 0, "maximum": 1},
    "cutoff": {"enum": ["space", "space-time"]},
    "sigma": {"enum": [0.5, 0.75]},
    "x": _POINT,
    "t": {"type": "number", "minimum": 0},
    "rho": _POS,
    "theta": _POS,
}, ["variant", "sign", "a", "x", "t", "rho"])

_RECUR = _obj({
    "id": {"type": "string"},
    "spec": {"type": "object"},
    "omega0": _POS,
    "rho0": _POS,
    "n_max": {"type": "integer", "minimum": 1},
    "r_stop": _POS,
}, ["id", "spec", "omega0"])

_ANALYSIS = _obj({
    "interface": _obj({"left_value": _NUM, "T_L": _NUM}),
    "rho_list": {"type": "array", "items": _POS, "minItems": 1},
    "anchors": {"type": "array", "items": _ANCHOR},
    "schedule": {"type": "array", "items": _POS, "minItems": 1},
    "xi": _POS,
    "energy": {"type": "array", "items": _ENERGY},
    "recurrence": {"type": "array", "items": _RECUR},
    "checkpoint": {"type": "boolean"},
})

_OUTPUT = _obj({"directory": {"type": "string"}, "stride": {"type": "integer", "minimum": 1}})

SCHEMA = _obj({
    "name": {"type": "string"},
    "problem": _PROBLEM,
    "solver": _SOLVER,
    "analysis": _ANALYSIS,
    "output": _OUTPUT,
}, ["problem", "solver"])


def _semantic(cfg) -> list[str]:
    out = []
    pr = cfg.get("problem", {})
    bc = pr.get("bc", {})
    if "eps" not in pr and "eps_list" not in pr:
        out.append("problem: one of 'eps' or 'eps_list' is required")
    if bc.get("kind") == "dirichlet" and "g" not in bc:
        out.append("problem.bc: Dirichlet data needs 'g'")
    if bc.get("kind") == "neumann" and pr.get("p", 2) != 2:
        out.append("problem.bc: the Neumann problem is implemented for p = 2 only")
    dom = pr.get("domain", {})
    want = 1 if dom.get("kind") == "interval" else 2
    if "size" in dom and len(dom["size"]) != want:
        out.append(f"problem.domain.size: expected {want} entries for {dom.get('kind')}")
    sched = cfg.get("analysis", {}).get("schedule")
    if sched is not None and any(b >= a for a, b in zip(sched, sched[1:])):
        out.append("analysis.schedule: radii must be strictly decreasing")
    return out


def validate_config(cfg: dict) -> dict:
    """Raise :class:`ConfigInvalid` listing every violation."""
    v = jsonschema.Draft202012Validator(SCHEMA)
    errs = sorted(v.iter_errors(cfg), key=lambda e: ([str(s) for s in e.absolute_path], e.message))
    msgs = [f"{'.'.join(str(s) for s in e.absolute_path) or '<root>'}: {e.message}"
            for e in errs]
    if not msgs:
        msgs = _semantic(cfg)
    if msgs:
        raise ConfigInvalid(msgs)
    return cfg


def config_hash(cfg: dict) -> str:
    """sha256 of the canonical JSON form.  The output directory is left out
    since it does not change any result."""
    c = copy.deepcopy(cfg)
    c.get("output", {}).pop("directory", None)
    text = json.dumps(c, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigInvalid([f"<file>: not valid JSON ({exc})"]) from None
    return validate_config(cfg)
