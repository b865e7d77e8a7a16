"""Problem builders shared by several test modules."""

import numpy as np

from stefanlab.geometry import ShapeSpec, build_domain, certify_alpha_star
from stefanlab.solver import BoundaryData, FluxModel, Problem, SolverConfig


def stefan_problem(n=512, eps=1e-3, dt=1e-4, T=0.5, stride=1):
    """One-phase Stefan problem on [0, 2]: wall at 1, ice at -eps."""
    grid = build_domain(ShapeSpec("interval", size=(2.0,)), 2.0 / n)
    bc = BoundaryData("dirichlet", u0=lambda x: np.full(len(x), -eps),
                      g=lambda x, t: np.where(x[:, 0] < 1.0, 1.0, -eps))
    cfg = SolverConfig(dt=dt, newton_tol=1e-10, linearization="newton")
    return Problem(grid, bc, FluxModel(2), cfg, 1.0, T, stride=stride)


def l_shape_problem(h=1 / 64, dt=2e-3, T=0.1):
    """Two-phase L-shape with the phase boundary through the re-entrant corner."""
    grid = certify_alpha_star(build_domain(ShapeSpec("l-shape"), h), [0.125, 0.25, 0.5])
    ramp = lambda x: x[:, 0] - x[:, 1]
    bc = BoundaryData(
        "dirichlet",
        u0=lambda x: ramp(x) + 0.5 * np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]),
        g=lambda x, t: ramp(x))
    cfg = SolverConfig(dt=dt, linearization="newton")
    return Problem(grid, bc, FluxModel(2), cfg, 1.0, T)


L_SHAPE_SCHEDULE = [0.25, 0.1875, 0.125, 0.09375, 0.0625, 0.046875, 0.03125]
