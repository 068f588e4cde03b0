"""Energy functionals of a velocity field."""
from __future__ import annotations

import numpy as np

from .dg import DGField


def _check_vector(u: DGField):
    if u.space.components != u.space.dim:
        raise ValueError("expected a vector-valued field")


def kinetic_energy(u: DGField) -> float:
    """Volume-averaged kinetic energy ``(1/|Omega|) int u.u / 2``, with k+2 points."""
    _check_vector(u)
    tab = u.space.tables(u.space.degree + 2)
    vals = tab.values(u.data)
    return float(0.5 * np.sum(np.sum(vals**2, axis=1) * tab.wvol) / u.space.mesh.measure)


def dissipation_rate(u: DGField, nu: float) -> float:
    """``(nu/|Omega|) int grad u : grad u`` with broken (cell-wise) gradients."""
    _check_vector(u)
    tab = u.space.tables(u.space.degree + 1)
    g = tab.gradient(u.data)
    return float(nu * np.sum(np.sum(g**2, axis=(1, 2)) * tab.wvol) / u.space.mesh.measure)
