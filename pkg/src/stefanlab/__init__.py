"""Regularized two-phase Stefan problem with p-Laplacian diffusion:
solver, energy diagnostics, oscillation measurements and iteration schemes."""

__version__ = "0.1.0"
