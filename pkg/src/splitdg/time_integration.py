"""BDF and extrapolation coefficients, CFL time steps and startup policies.

All coefficients assume a uniform step.  History index ``i`` refers to the
level ``t^{n+1-i}``.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

MAX_ORDER = 4
EPS_VELOCITY_FLOOR = 1e-12


def _solve_exact(matrix, rhs):
    """Gauss-Jordan elimination over the rationals."""
    n = len(rhs)
    a = [[Fraction(v) for v in row] + [Fraction(r)] for row, r in zip(matrix, rhs)]
    for col in range(n):
        piv = next(r for r in range(col, n) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        p = a[col][col]
        a[col] = [v / p for v in a[col]]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [vr - f * vc for vr, vc in zip(a[r], a[col])]
    return [a[r][n] for r in range(n)]


def _check_order(order, name):
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"{name} must lie in 1..{MAX_ORDER}, got {order}")


@dataclass(frozen=True)
class BDFScheme:
    order: int
    gamma0: float
    alpha: np.ndarray


def bdf_coefficients(order: int) -> BDFScheme:
    """Constant-step BDF weights.

    ``(gamma0 * u^{n+1} - sum_i alpha_i u^{n+1-i}) / dt`` approximates
    ``du/dt`` at ``t^{n+1}`` exactly for polynomials of degree <= ``order``.
    """
    _check_order(order, "BDF order")
    # unknowns (gamma0, alpha_1..alpha_J); monomials s^m with s = (t - t^{n+1}) / dt
    rows, rhs = [], []
    for m in range(order + 1):
        row = [1 if m == 0 else 0]
        row += [-((-i) ** m) for i in range(1, order + 1)]
        rows.append(row)
        rhs.append(1 if m == 1 else 0)
    sol = _solve_exact(rows, rhs)
    return BDFScheme(order, float(sol[0]), np.array([float(v) for v in sol[1:]]))


def extrapolation_coefficients(order: int) -> np.ndarray:
    """Weights ``beta_i`` with ``sum_i beta_i q(t^{n+1-i}) = q(t^{n+1})`` for deg q < order."""
    _check_order(order, "extrapolation order")
    rows = [[(-i) ** m for i in range(1, order + 1)] for m in range(order)]
    rhs = [1 if m == 0 else 0 for m in range(order)]
    return np.array([float(v) for v in _solve_exact(rows, rhs)])


def default_extrapolation_orders(order: int) -> tuple:
    """``(J_c, J_p)``: equal to J up to BDF-2, J - 1 beyond."""
    _check_order(order, "BDF order")
    lowered = order if order <= 2 else order - 1
    return lowered, lowered


def boundary_time_derivative(history, order: int, dt: float):
    """BDF approximation of dg/dt at the newest level.

    ``history[0]`` is g^{n+1}, ``history[i]`` is g^{n+1-i}.
    """
    scheme = bdf_coefficients(order)
    if len(history) < order + 1:
        raise ValueError(f"BDF-{order} needs {order + 1} samples, got {len(history)}")
    acc = scheme.gamma0 * np.asarray(history[0], dtype=float)
    for a, g in zip(scheme.alpha, history[1:]):
        acc = acc - a * np.asarray(g, dtype=float)
    return acc / dt


def compute_cfl_time_step(mesh, u, k_u: int, cfl: float) -> float:
    """``dt = CFL * h_min / (k_u**1.5 * max|u|)`` with a floor on ``max|u|``."""
    data = u.data if hasattr(u, "data") else np.asarray(u)
    speed = np.sqrt(np.sum(data**2, axis=1)).max() if data.size else 0.0
    return float(cfl * mesh.h_min / (k_u**1.5 * max(float(speed), EPS_VELOCITY_FLOOR)))


STARTUP_POLICIES = ("exact_interpolation", "increasing_order")


@dataclass(frozen=True)
class StepOrders:
    order: int
    convective_order: int
    pressure_order: int


def startup_sequence(order: int, policy: str, exact=None, j_c=None, j_p=None) -> list:
    """Orders used for the first steps before the full-order step is reachable.

    Returns one ``StepOrders`` per startup step; empty when the first step
    can already run at full order.
    """
    _check_order(order, "BDF order")
    if policy not in STARTUP_POLICIES:
        raise ValueError(f"unknown startup policy {policy!r}; choose from {STARTUP_POLICIES}")
    if policy == "exact_interpolation":
        if exact is None:
            raise ValueError("exact_interpolation startup needs an exact solution")
        return []
    return [StepOrders(j, j, j) for j in range(1, order)]


@dataclass
class TimeControls:
    end_time: float
    dt: float | None = None
    cfl: float | None = None
    step: int = 0
    startup_policy: str = "increasing_order"

    def __post_init__(self):
        if self.dt is None and self.cfl is None:
            raise ValueError("give either a fixed dt or a target CFL")
        if self.dt is not None and self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.startup_policy not in STARTUP_POLICIES:
            raise ValueError(f"unknown startup policy {self.startup_policy!r}")

    def n_steps(self, dt: float) -> int:
        """Number of uniform steps to reach ``end_time`` (rounded, >= 1)."""
        return max(1, int(round(self.end_time / dt)))
