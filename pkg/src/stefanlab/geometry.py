"""Rectilinear cell grids, the measure-density certificate and intrinsic cylinders.

A domain is a boolean inclusion mask over a box of ``h``-sized cells whose
lower corner sits at the origin.  Cell ``(i, j)`` covers
``[i h, (i+1) h] x [j h, (j+1) h]``, so index 0 is the x-direction.  Unknowns
live at cell centres.  Boundary points used for the density certificate are
grid vertices on the topological boundary of the union of active cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

__all__ = [
    "GeometryError",
    "ResolutionTooCoarse",
    "ConditionGViolated",
    "ShapeSpec",
    "DomainGrid",
    "IntrinsicCylinder",
    "ClipResult",
    "build_domain",
    "measure_density",
    "certify_alpha_star",
    "intrinsic_theta",
    "singular_theta",
    "start_cylinder_nested",
    "cylinder_clip",
    "snap_radius",
]

INTERIOR, LATERAL = 0, 1
_TIME_TOL = 1e-12


class GeometryError(ValueError):
    pass


class ResolutionTooCoarse(GeometryError):
    pass


class ConditionGViolated(GeometryError):
    pass


@dataclass(frozen=True)
class ShapeSpec:
    """Shape descriptor.

    kind: ``interval`` (1D), ``rectangle``, ``l-shape``, ``notched`` or
    ``mask``.  ``size`` is the bounding-box edge lengths.  For ``notched`` a
    slot of width ``notch_width`` and depth ``notch_depth`` is cut into the
    top edge, centred at ``notch_center``.  For ``mask`` the boolean array is
    given directly (index 0 = x).
    """

    kind: str
    size: tuple = (1.0, 1.0)
    notch_width: float = 0.25
    notch_depth: float = 0.5
    notch_center: float = 0.5
    mask: np.ndarray | None = field(default=None, compare=False)


@dataclass(frozen=True, eq=False)
class DomainGrid:
    """Cell-centred grid on a masked box.

    ``active`` lists the flat box indices of included cells in C order; all
    per-node arrays are indexed by position in ``active``.
    """

    dim: int
    h: float
    mask: np.ndarray
    shape_kind: str = "mask"
    alpha_star: float | None = None
    rho_bar: float | None = None

    def __post_init__(self):
        m = np.ascontiguousarray(self.mask, dtype=bool)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)
        if m.ndim != self.dim:
            raise GeometryError("mask rank does not match dim")
        active = np.flatnonzero(m.ravel())
        lookup = np.full(m.size, -1, dtype=np.int64)
        lookup[active] = np.arange(active.size)
        object.__setattr__(self, "active", active)
        object.__setattr__(self, "_lookup", lookup.reshape(m.shape))
        idx = np.stack(np.unravel_index(active, m.shape), axis=1)
        object.__setattr__(self, "cell_index", idx)
        object.__setattr__(self, "centers", (idx + 0.5) * self.h)
        self._build_faces()

    # -- basic sizes -------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return int(self.active.size)

    @property
    def cell_volume(self) -> float:
        return self.h ** self.dim

    @property
    def face_area(self) -> float:
        return self.h ** (self.dim - 1)

    @property
    def box_shape(self) -> tuple:
        return self.mask.shape

    @property
    def measure(self) -> float:
        return self.n_cells * self.cell_volume

    def _build_faces(self):
        m, lookup, h = self.mask, self._lookup, self.h
        int_i, int_j, int_ax = [], [], []
        b_cell, b_axis, b_side = [], [], []
        for ax in range(self.dim):
            # interior faces between active neighbours along ax
            lo = [slice(None)] * self.dim
            hi = [slice(None)] * self.dim
            lo[ax], hi[ax] = slice(0, -1), slice(1, None)
            both = m[tuple(lo)] & m[tuple(hi)]
            int_i.append(lookup[tuple(lo)][both])
            int_j.append(lookup[tuple(hi)][both])
            int_ax.append(np.full(int(both.sum()), ax))
            # boundary faces: active cell whose neighbour is excluded or off-box
            pad = [(0, 0)] * self.dim
            pad[ax] = (1, 1)
            mp = np.pad(m, pad, constant_values=False)
            sl_c = [slice(None)] * self.dim
            sl_c[ax] = slice(1, -1)
            for side in (-1, 1):
                sl_n = list(sl_c)
                sl_n[ax] = slice(1 + side, mp.shape[ax] - 1 + side)
                open_face = m & ~mp[tuple(sl_n)]
                cells = lookup[open_face]
                b_cell.append(cells)
                b_axis.append(np.full(cells.size, ax))
                b_side.append(np.full(cells.size, side))
        self_i = np.concatenate(int_i) if int_i else np.zeros(0, int)
        self_j = np.concatenate(int_j) if int_j else np.zeros(0, int)
        bc = np.concatenate(b_cell)
        ba = np.concatenate(b_axis)
        bs = np.concatenate(b_side)
        order = np.lexsort((bs, ba, bc))
        bc, ba, bs = bc[order], ba[order], bs[order]
        bx = self.centers[bc].copy()
        bx[np.arange(bc.size), ba] += bs * 0.5 * h
        object.__setattr__(self, "face_i", self_i.astype(np.int64))
        object.__setattr__(self, "face_j", self_j.astype(np.int64))
        object.__setattr__(self, "face_axis", np.concatenate(int_ax).astype(np.int64))
        object.__setattr__(self, "bface_cell", bc.astype(np.int64))
        object.__setattr__(self, "bface_axis", ba.astype(np.int64))
        object.__setattr__(self, "bface_side", bs.astype(np.int64))
        object.__setattr__(self, "bface_x", bx)
        kind = np.full(self.n_cells, INTERIOR, dtype=np.int8)
        kind[bc] = LATERAL
        object.__setattr__(self, "boundary_kind", kind)

    # -- boundary vertices -------------------------------------------------
    def boundary_vertices(self) -> np.ndarray:
        """Integer vertex indices on the boundary of the active region."""
        m = np.pad(self.mask, 1, constant_values=False)
        d = self.dim
        # each vertex touches 2^d cells; it is on the boundary if they are mixed
        shape = tuple(s - 1 for s in m.shape)
        count = np.zeros(shape, dtype=np.int64)
        for off in np.ndindex(*(2,) * d):
            sl = tuple(slice(o, o + s) for o, s in zip(off, shape))
            count += m[sl]
        on_bd = (count > 0) & (count < 2 ** d)
        return np.argwhere(on_bd)

    def node_of(self, point) -> int:
        """Active index of the cell containing ``point`` (-1 if outside)."""
        idx = np.floor(np.asarray(point, dtype=float) / self.h).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.box_shape)):
            return -1
        return int(self._lookup[tuple(idx)])

    def lookup_box(self) -> np.ndarray:
        """Box-shaped array mapping cells to active indices (-1 if excluded)."""
        return self._lookup

    def to_box(self, values, fill=0.0) -> np.ndarray:
        """Scatter per-node values (trailing axis) into box-shaped arrays."""
        values = np.asarray(values)
        lead = values.shape[:-1]
        out = np.full(lead + (self.mask.size,), fill, dtype=values.dtype)
        out[..., self.active] = values
        return out.reshape(lead + self.mask.shape)

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "h": self.h,
            "box_shape": list(self.box_shape),
            "shape_kind": self.shape_kind,
            "n_cells": self.n_cells,
            "alpha_star": self.alpha_star,
            "rho_bar": self.rho_bar,
        }


def _cells(length: float, h: float) -> int:
    n = length / h
    k = int(round(n))
    if k < 1 or abs(n - k) > 1e-9 * max(1.0, n):
        raise ResolutionTooCoarse(f"length {length} is not a multiple of h={h}")
    return k


def build_domain(spec: ShapeSpec, h: float) -> DomainGrid:
    """Rasterize a shape descriptor at mesh width ``h``."""
    if not h > 0:
        raise GeometryError("h must be positive")
    kind = spec.kind
    if kind == "interval":
        n = _cells(spec.size[0], h)
        if n < 2:
            raise ResolutionTooCoarse("interval needs at least two cells")
        mask = np.ones(n, dtype=bool)
        return DomainGrid(1, h, mask, kind)
    if kind == "mask":
        if spec.mask is None:
            raise GeometryError("mask shape requires a mask array")
        mask = np.asarray(spec.mask, dtype=bool)
        _check_mask(mask)
        return DomainGrid(mask.ndim, h, mask, kind)
    nx, ny = _cells(spec.size[0], h), _cells(spec.size[1], h)
    if min(nx, ny) < 2:
        raise ResolutionTooCoarse("rectangle sides must span at least two cells")
    mask = np.ones((nx, ny), dtype=bool)
    if kind == "rectangle":
        pass
    elif kind == "l-shape":
        # remove the upper-right quadrant
        if nx % 2 or ny % 2 or nx // 2 < 2 or ny // 2 < 2:
            raise ResolutionTooCoarse("l-shape arms must be at least 2h wide")
        mask[nx // 2:, ny // 2:] = False
    elif kind == "notched":
        w = spec.notch_width / h
        dpt = spec.notch_depth / h
        if w < 2 - 1e-9 or dpt < 2 - 1e-9:
            raise ResolutionTooCoarse("notch narrower than 2h")
        c = spec.notch_center / h
        i0, i1 = int(round(c - w / 2)), int(round(c + w / 2))
        d = int(round(dpt))
        if i0 < 2 or i1 > nx - 2 or d > ny - 2:
            raise ResolutionTooCoarse("notch leaves a wall thinner than 2h")
        mask[i0:i1, ny - d:] = False
    else:
        raise GeometryError(f"unknown shape kind {kind!r}")
    _check_mask(mask)
    return DomainGrid(2, h, mask, kind)


def _check_mask(mask: np.ndarray):
    if mask.ndim not in (1, 2):
        raise GeometryError("only 1D and 2D masks are supported")
    if not mask.any():
        raise GeometryError("mask is empty")
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    _, n = ndimage.label(mask, structure=structure)
    if n != 1:
        raise GeometryError(f"mask must be connected, found {n} components")


def snap_radius(rho: float, h: float) -> float:
    """Round a radius to the nearest positive multiple of ``h``."""
    return max(1, int(round(rho / h))) * h


def _overlap_1d(lo, hi, a, b):
    return np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)


def measure_density(g: DomainGrid, x_o, rho: float) -> float:
    """Fraction of the cube ``K_rho(x_o)`` covered by the domain.

    Overlaps are exact products of 1D interval overlaps; the part of the cube
    outside the bounding box counts as exterior.
    """
    x_o = np.atleast_1d(np.asarray(x_o, dtype=float))
    rho = snap_radius(rho, g.h)
    lo, hi = x_o - rho, x_o + rho
    cl = g.cell_index * g.h
    frac = np.ones(g.n_cells)
    for ax in range(g.dim):
        frac *= _overlap_1d(cl[:, ax], cl[:, ax] + g.h, lo[ax], hi[ax])
    return float(frac.sum() / (2 * rho) ** g.dim)


def certify_alpha_star(g: DomainGrid, rho_list: Sequence[float]) -> DomainGrid:
    """Certify the measure-density condition over all boundary vertices.

    Returns a copy of ``g`` with ``alpha_star`` and ``rho_bar`` filled in.
    Vertices and snapped radii are grid aligned, so the cube overlap is an
    exact cell count, evaluated with a summed-area table.
    """
    radii = sorted({snap_radius(r, g.h) for r in rho_list})
    if not radii:
        raise GeometryError("rho_list must be non-empty")
    if radii[0] < 2 * g.h - 1e-12:
        raise GeometryError("radii must be at least 2h")
    verts = g.boundary_vertices()
    csum = g.mask.astype(np.int64)
    for ax in range(g.dim):
        csum = np.cumsum(csum, axis=ax)
    csum = np.pad(csum, [(1, 0)] * g.dim)
    worst = 0.0
    for rho in radii:
        k = int(round(rho / g.h))
        lo = [np.clip(verts[:, ax] - k, 0, g.box_shape[ax]) for ax in range(g.dim)]
        hi = [np.clip(verts[:, ax] + k, 0, g.box_shape[ax]) for ax in range(g.dim)]
        if g.dim == 1:
            count = csum[hi[0]] - csum[lo[0]]
        else:
            count = (csum[hi[0], hi[1]] - csum[lo[0], hi[1]]
                     - csum[hi[0], lo[1]] + csum[lo[0], lo[1]])
        ratio = count / float((2 * k) ** g.dim)
        worst = max(worst, float(ratio.max()))
    alpha = 1.0 - worst
    if alpha <= 0:
        raise ConditionGViolated("a boundary cube is entirely inside the domain")
    return replace(g, alpha_star=alpha, rho_bar=float(radii[-1]))


def intrinsic_theta(xi_omega: float, p: float) -> float:
    """Time scaling ``(xi omega)^(2-p)`` of the degenerate cylinders."""
    if not xi_omega > 0 or p < 2:
        raise ValueError("need xi_omega > 0 and p >= 2")
    return float(xi_omega) ** (2.0 - p)


def singular_theta(delta_xi_omega: float, p: float) -> float:
    """Time scaling ``(delta xi omega)^(1-p)`` of the jump-dominated cylinders."""
    if not delta_xi_omega > 0 or p < 2:
        raise ValueError("need delta_xi_omega > 0 and p >= 2")
    return float(delta_xi_omega) ** (1.0 - p)


def start_cylinder_nested(theta_tilde: float, rho: float, p: float) -> bool:
    """Whether ``theta_tilde (8 rho)^p <= rho^(p-1)``, the fit condition for
    the starting cylinder of the boundary iteration."""
    return theta_tilde * (8.0 * rho) ** p <= rho ** (p - 1.0)


@dataclass(frozen=True)
class IntrinsicCylinder:
    """``K_rho(x_o) x (t_o - theta rho^p, t_o)``, or forward in time if
    ``forward`` is set."""

    x_o: tuple
    t_o: float
    rho: float
    theta: float
    p: float = 2.0
    forward: bool = False

    def __post_init__(self):
        if not (self.rho > 0 and self.theta > 0):
            raise GeometryError("cylinder needs rho > 0 and theta > 0")
        object.__setattr__(self, "x_o", tuple(float(v) for v in np.atleast_1d(self.x_o)))

    @property
    def length(self) -> float:
        return self.theta * self.rho ** self.p

    @property
    def t_range(self) -> tuple:
        if self.forward:
            return (self.t_o, self.t_o + self.length)
        return (self.t_o - self.length, self.t_o)


@dataclass(frozen=True, eq=False)
class ClipResult:
    """Nodes and steps of a cylinder intersected with the space-time domain.

    ``box_cells`` are the flat box indices of every cell whose centre lies in
    the cube, with ``inside`` marking those in the domain; ``nodes`` are the
    active indices of the included ones.
    """

    nodes: np.ndarray
    steps: np.ndarray
    clipped: bool
    box_cells: np.ndarray
    inside: np.ndarray
    cube_shape: tuple

    @property
    def size(self) -> int:
        return int(self.nodes.size * self.steps.size)

    @property
    def empty(self) -> bool:
        return self.size == 0


def cylinder_clip(g: DomainGrid, c: IntrinsicCylinder, times) -> ClipResult:
    """Index set of ``c`` intersected with ``E x [0, T]``.

    Spatially: cells whose centre is within sup-distance ``rho`` of ``x_o``
    (closed cube).  In time: steps with ``t_lo < t_n <= t_hi`` for backward
    cylinders.  If the cylinder reaches below ``t = 0`` the initial sample is
    included and ``clipped`` is set.  Forward cylinders take
    ``t_lo <= t_n <= t_hi``.
    """
    times = np.asarray(times, dtype=float)
    x_o = np.asarray(c.x_o, dtype=float)
    if x_o.size != g.dim:
        raise GeometryError("anchor dimension does not match grid")
    tol = 1e-9 * g.h
    lo_idx, hi_idx = [], []
    for ax in range(g.dim):
        # centres (i + 1/2) h within [x - rho, x + rho]
        a = int(np.ceil((x_o[ax] - c.rho - tol) / g.h - 0.5))
        b = int(np.floor((x_o[ax] + c.rho + tol) / g.h - 0.5))
        lo_idx.append(max(a, 0))
        hi_idx.append(min(b, g.box_shape[ax] - 1))
    if any(b < a for a, b in zip(lo_idx, hi_idx)):
        box_cells = np.zeros(0, dtype=np.int64)
        cube_shape = (0,) * g.dim
    else:
        ranges = [np.arange(a, b + 1) for a, b in zip(lo_idx, hi_idx)]
        grids = np.meshgrid(*ranges, indexing="ij")
        cube_shape = grids[0].shape
        box_cells = np.ravel_multi_index([gr.ravel() for gr in grids], g.box_shape)
    look = g.lookup_box().ravel()[box_cells]
    inside = look >= 0
    nodes = look[inside]

    t_lo, t_hi = c.t_range
    ttol = _TIME_TOL * max(1.0, abs(t_hi))
    clipped = t_lo < -ttol
    if c.forward:
        sel = (times >= t_lo - ttol) & (times <= t_hi + ttol)
    else:
        sel = (times > t_lo + ttol) & (times <= t_hi + ttol)
        if clipped:
            sel |= np.abs(times) <= ttol
    steps = np.flatnonzero(sel)
    return ClipResult(nodes, steps, bool(clipped), box_cells, inside, cube_shape)
