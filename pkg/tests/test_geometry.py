import numpy as np
import pytest
from hypothesis import given, strategies as st

from stefanlab.geometry import (ConditionGViolated, GeometryError, IntrinsicCylinder,
                                ResolutionTooCoarse, ShapeSpec, build_domain,
                                certify_alpha_star, cylinder_clip, intrinsic_theta,
                                measure_density, singular_theta, start_cylinder_nested)


def test_rectangle_full_mask():
    g = build_domain(ShapeSpec("rectangle"), 1 / 64)
    assert g.box_shape == (64, 64)
    assert g.mask.all()
    assert g.measure == pytest.approx(1.0)


def test_l_shape_area():
    g = build_domain(ShapeSpec("l-shape"), 1 / 64)
    assert g.n_cells == 3 * 32 * 32
    assert g.measure == pytest.approx(0.75)
    # upper-right quadrant is removed
    assert g.node_of((0.75, 0.75)) == -1
    assert g.node_of((0.25, 0.75)) >= 0


def test_disconnected_mask_rejected():
    m = np.zeros((8, 8), dtype=bool)
    m[:3, :3] = True
    m[6:, 6:] = True
    with pytest.raises(GeometryError):
        build_domain(ShapeSpec("mask", mask=m), 1 / 8)


def test_notch_below_resolution_rejected():
    with pytest.raises(ResolutionTooCoarse):
        build_domain(ShapeSpec("notched", notch_width=1 / 64), 1 / 64)


def test_exterior_neighbours_define_lateral_cells():
    g = build_domain(ShapeSpec("rectangle"), 1 / 8)
    box = g.to_box(g.boundary_kind.astype(float))
    assert box[0].all() and box[-1].all() and box[:, 0].all() and box[:, -1].all()
    assert not box[1:-1, 1:-1].any()


@pytest.mark.parametrize("h", [1 / 32, 1 / 64, 1 / 128])
def test_measure_density_canonical(h):
    rho = 1 / 8
    rect = build_domain(ShapeSpec("rectangle"), h)
    ell = build_domain(ShapeSpec("l-shape"), h)
    tol = 2 * h / rho
    assert abs(measure_density(rect, (0.5, 0.0), rho) - 0.5) <= tol
    assert abs(measure_density(rect, (0.0, 0.0), rho) - 0.25) <= tol
    assert abs(measure_density(ell, (0.5, 0.5), rho) - 0.75) <= tol


@pytest.mark.parametrize("kind,alpha", [("rectangle", 0.5), ("l-shape", 0.25),
                                         ("notched", 0.25)])
def test_certify_alpha_star(kind, alpha):
    h, rho = 1 / 128, 1 / 8
    g = certify_alpha_star(build_domain(ShapeSpec(kind), h), [rho])
    assert abs(g.alpha_star - alpha) <= 2 * h / rho
    assert g.rho_bar == rho


def test_certify_interval():
    g = certify_alpha_star(build_domain(ShapeSpec("interval", size=(1.0,)), 1 / 64),
                           [1 / 16, 1 / 8])
    assert g.alpha_star == pytest.approx(0.5)


def test_certify_rejects_small_radii():
    g = build_domain(ShapeSpec("rectangle"), 1 / 16)
    with pytest.raises(GeometryError):
        certify_alpha_star(g, [1 / 32])


def test_condition_g_violation_class_is_a_geometry_error():
    assert issubclass(ConditionGViolated, GeometryError)


def test_theta_examples():
    assert intrinsic_theta(0.3, 2) == 1.0
    assert intrinsic_theta(0.5, 3) == pytest.approx(2.0)
    assert intrinsic_theta(0.25, 4) == pytest.approx(16.0)
    assert singular_theta(0.5, 2) == pytest.approx(2.0)
    assert singular_theta(0.5, 3) == pytest.approx(4.0)


@given(st.floats(1e-3, 1.0), st.floats(1e-3, 1.0), st.floats(2.0, 6.0))
def test_theta_lengthens_as_oscillation_drops(w1, w2, p):
    lo, hi = sorted((w1, w2))
    assert intrinsic_theta(lo, p) >= intrinsic_theta(hi, p) * (1 - 1e-12)


@given(st.floats(1e-3, 1.0), st.floats(0.01, 0.99), st.floats(2.0, 6.0))
def test_singular_cylinder_contains_intrinsic_one(xw, delta, p):
    assert singular_theta(delta * xw, p) >= intrinsic_theta(xw, p) * (1 - 1e-12)


def test_start_cylinder_nesting_predicate():
    # theta~ (8 rho)^p <= rho^(p-1)
    assert start_cylinder_nested(1.0 / 64 / 0.01 * 0.999, 0.01, 2)
    assert not start_cylinder_nested(1.0 / 64 / 0.01 * 1.001, 0.01, 2)


def test_clip_full_box():
    g = build_domain(ShapeSpec("rectangle"), 1 / 16)
    times = np.linspace(0, 1, 11)
    c = IntrinsicCylinder((0.5, 0.5), 1.0, 0.25, 1.0)
    clip = cylinder_clip(g, c, times)
    assert clip.nodes.size == 8 * 8
    # t in (0.9375, 1]
    assert clip.steps.tolist() == [10]
    assert not clip.clipped


def test_clip_lateral_vertex_keeps_interior_side():
    g = build_domain(ShapeSpec("rectangle"), 1 / 16)
    c = IntrinsicCylinder((0.0, 0.5), 0.5, 0.125, 1.0)
    clip = cylinder_clip(g, c, [0.0, 0.5])
    assert clip.nodes.size == 2 * 4
    assert np.all(g.centers[clip.nodes, 0] < 0.125 + 1e-12)


def test_clip_below_zero_is_flagged():
    g = build_domain(ShapeSpec("interval", size=(1.0,)), 1 / 16)
    c = IntrinsicCylinder((0.5,), 0.01, 0.25, 1.0)
    clip = cylinder_clip(g, c, [0.0, 0.005, 0.01])
    assert clip.clipped
    assert 0 in clip.steps.tolist()


@given(st.integers(2, 8), st.integers(2, 8), st.floats(0.1, 0.9), st.floats(0.1, 0.9))
def test_clip_monotone_in_radius(k1, k2, x, y):
    g = build_domain(ShapeSpec("l-shape"), 1 / 32)
    times = np.linspace(0, 0.2, 21)
    r1, r2 = sorted((k1 / 32, k2 / 32))
    a = cylinder_clip(g, IntrinsicCylinder((x, y), 0.2, r1, 1.0), times)
    b = cylinder_clip(g, IntrinsicCylinder((x, y), 0.2, r2, 1.0), times)
    assert set(a.nodes.tolist()) <= set(b.nodes.tolist())
    assert set(a.steps.tolist()) <= set(b.steps.tolist())
