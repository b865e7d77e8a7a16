"""Single-file run checkpoints.

Layout: one UTF-8 JSON header line terminated by ``\\n``, then the body as
little-endian float64.  The body holds, for every stored sample in time
order, ``u`` over the active cells followed by ``w`` over the active cells.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .solver import SpaceTimeField

__all__ = ["CheckpointError", "Checkpoint", "write_checkpoint", "read_checkpoint"]

_DTYPE = np.dtype("<f8")
FORMAT = "stefanlab-checkpoint/1"


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Checkpoint:
    header: dict
    times: np.ndarray
    u: np.ndarray
    w: np.ndarray


def write_checkpoint(path, field: SpaceTimeField, config_hash: str = "",
                     extra: dict | None = None) -> Path:
    path = Path(path)
    r = field.enthalpy
    header = {
        "format": FORMAT,
        "config_hash": config_hash,
        "grid": field.grid.describe(),
        "eps": r.eps,
        "nu": r.nu,
        "p": field.flux.p if field.flux is not None else None,
        "times": [float(t) for t in field.times],
        "n_cells": int(field.grid.n_cells),
        "layout": "step-major; per step u[n_cells] then w[n_cells]; float64 little-endian",
    }
    if extra:
        header.update(extra)
    body = np.stack([field.u, field.w], axis=1).astype(_DTYPE, copy=False)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(body).tobytes())
    return path


def read_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise CheckpointError("missing header line")
    header = json.loads(raw[:nl].decode("utf-8"))
    if header.get("format") != FORMAT:
        raise CheckpointError(f"unsupported format {header.get('format')!r}")
    n, m = header["n_cells"], len(header["times"])
    body = np.frombuffer(raw[nl + 1:], dtype=_DTYPE)
    if body.size != 2 * n * m:
        raise CheckpointError(f"body has {body.size} values, expected {2 * n * m}")
    body = body.reshape(m, 2, n)
    return Checkpoint(header, np.asarray(header["times"]), body[:, 0].copy(),
                      body[:, 1].copy())
