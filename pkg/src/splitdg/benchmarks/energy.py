"""Energy budgets of sampled kinetic-energy series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..diagnostics import dissipation_rate, kinetic_energy  # noqa: F401  (re-exported)


@dataclass
class DiagnosticsSeries:
    """Sampled energy history of one run.

    ``numerical`` holds ``-dE/dt - eps`` per sample and ``total`` the
    integrated numerically dissipated energy.
    """

    t: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    numerical: np.ndarray
    total: float

    def __post_init__(self):
        n = len(self.t)
        if not (len(self.energy) == len(self.dissipation) == len(self.numerical) == n):
            raise ValueError("diagnostic arrays must have equal length")


def _uniform_spacing(t):
    t = np.asarray(t, dtype=float)
    h = np.diff(t)
    if np.any(h <= 0):
        raise ValueError("sample times must increase")
    if not np.allclose(h, h[0], rtol=1e-8, atol=1e-12):
        raise ValueError("samples must be uniformly spaced")
    return float(h[0])


def energy_rate(t, energy) -> np.ndarray:
    """dE/dt by central differences, one-sided second-order differences at the ends."""
    energy = np.asarray(energy, dtype=float)
    if energy.size < 3:
        raise ValueError("need at least 3 samples")
    return np.gradient(energy, _uniform_spacing(t), edge_order=2)


def numerical_dissipation(t, energy, dissipation) -> tuple:
    """Per-sample ``-dE/dt - eps`` and the total ``-(E(T) - E(0)) - int eps dt``.

    Examples
    --------
    >>> t = np.linspace(0.0, 1.0, 11)
    >>> rate, total = numerical_dissipation(t, 1.0 - 0.3 * t, np.full(11, 0.3))
    >>> bool(np.allclose(rate, 0.0)), abs(total) < 1e-12
    (True, True)
    """
    t = np.asarray(t, dtype=float)
    energy = np.asarray(energy, dtype=float)
    dissipation = np.asarray(dissipation, dtype=float)
    if not (t.size == energy.size == dissipation.size):
        raise ValueError("t, energy and dissipation must have equal length")
    rate = -energy_rate(t, energy) - dissipation
    total = -(energy[-1] - energy[0]) - float(np.trapezoid(dissipation, t))
    return rate, total


def diagnostics_series(t, energy, dissipation) -> DiagnosticsSeries:
    rate, total = numerical_dissipation(t, energy, dissipation)
    return DiagnosticsSeries(np.asarray(t, float), np.asarray(energy, float),
                             np.asarray(dissipation, float), rate, total)
