"""Closed-form Taylor-Green vortex fields.

Callables take coordinates shaped ``(dim, ...)`` and return arrays shaped
``(dim, ...)`` for vectors or ``(...)`` for scalars.
"""
from __future__ import annotations

import numpy as np

TWO_PI = 2.0 * np.pi


def _decay(nu, t):
    return np.exp(-4.0 * nu * np.pi**2 * t)


def tgv2d_velocity(x, t, nu):
    x = np.asarray(x, dtype=float)
    e = _decay(nu, t)
    return np.stack([-np.sin(TWO_PI * x[1]) * e, np.sin(TWO_PI * x[0]) * e])


def tgv2d_pressure(x, t, nu):
    x = np.asarray(x, dtype=float)
    return -np.cos(TWO_PI * x[0]) * np.cos(TWO_PI * x[1]) * _decay(nu, t) ** 2


def tgv2d_exact(x, t, nu):
    """Velocity and pressure of the decaying 2D Taylor-Green vortex.

    Examples
    --------
    >>> u, p = tgv2d_exact(np.array([0.25, 0.0]), 0.0, 0.025)
    >>> np.round(u, 12).tolist(), round(float(p), 12)
    ([-0.0, 1.0], -0.0)
    """
    return tgv2d_velocity(x, t, nu), tgv2d_pressure(x, t, nu)


def tgv2d_velocity_gradient(x, t, nu):
    """``G[a, b] = d u_a / d x_b``."""
    x = np.asarray(x, dtype=float)
    e = _decay(nu, t)
    z = np.zeros_like(x[0])
    return np.array([
        [z, -TWO_PI * np.cos(TWO_PI * x[1]) * e],
        [TWO_PI * np.cos(TWO_PI * x[0]) * e, z],
    ])


def tgv2d_velocity_laplacian(x, t, nu):
    return -(TWO_PI**2) * tgv2d_velocity(x, t, nu)


def tgv2d_velocity_rate(x, t, nu):
    return -4.0 * nu * np.pi**2 * tgv2d_velocity(x, t, nu)


def tgv2d_pressure_gradient(x, t, nu):
    x = np.asarray(x, dtype=float)
    e2 = _decay(nu, t) ** 2
    return np.stack([
        TWO_PI * np.sin(TWO_PI * x[0]) * np.cos(TWO_PI * x[1]) * e2,
        TWO_PI * np.cos(TWO_PI * x[0]) * np.sin(TWO_PI * x[1]) * e2,
    ])


def tgv3d_velocity(x):
    x = np.asarray(x, dtype=float)
    return np.stack([
        np.sin(x[0]) * np.cos(x[1]) * np.cos(x[2]),
        -np.cos(x[0]) * np.sin(x[1]) * np.cos(x[2]),
        np.zeros_like(x[0]),
    ])


def tgv3d_pressure(x):
    x = np.asarray(x, dtype=float)
    return (np.cos(2 * x[0]) + np.cos(2 * x[1])) * (np.cos(2 * x[2]) + 2.0) / 16.0


def tgv3d_initial(x):
    """Initial velocity and pressure of the 3D Taylor-Green vortex on ``[-pi, pi]^3``."""
    return tgv3d_velocity(x), tgv3d_pressure(x)


def tgv3d_velocity_gradient(x):
    x = np.asarray(x, dtype=float)
    s0, c0 = np.sin(x[0]), np.cos(x[0])
    s1, c1 = np.sin(x[1]), np.cos(x[1])
    s2, c2 = np.sin(x[2]), np.cos(x[2])
    z = np.zeros_like(x[0])
    return np.array([
        [c0 * c1 * c2, -s0 * s1 * c2, -s0 * c1 * s2],
        [s0 * s1 * c2, -c0 * c1 * c2, c0 * s1 * s2],
        [z, z, z],
    ])
