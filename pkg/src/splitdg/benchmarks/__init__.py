"""Manufactured solutions, energy diagnostics and study runners.

The study runners live in :mod:`splitdg.benchmarks.studies`.
"""
from ..diagnostics import dissipation_rate, kinetic_energy
from .energy import DiagnosticsSeries, diagnostics_series, energy_rate, numerical_dissipation
from .exact import tgv2d_exact, tgv3d_initial

__all__ = [
    "DiagnosticsSeries",
    "diagnostics_series",
    "dissipation_rate",
    "energy_rate",
    "kinetic_energy",
    "numerical_dissipation",
    "tgv2d_exact",
    "tgv3d_initial",
]
