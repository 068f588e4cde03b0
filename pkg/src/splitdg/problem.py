"""Continuous problem data: viscosity, forcing, boundary and initial data.

Data callables follow one convention: ``fn(x, t)`` (or ``fn(x)`` for
time-independent data) with ``x`` shaped ``(dim, ...)``; vector results are
shaped ``(dim, ...)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional

import numpy as np

from .benchmarks import exact as tgv
from .dg import call_data

PROBLEM_NAMES = ("tgv2d", "tgv3d", "custom")

# TGV2D sides: velocity prescribed on three sides, traction on the top side
TGV2D_BOUNDARY = {
    "x0_lower": "dirichlet",
    "x0_upper": "dirichlet",
    "x1_lower": "dirichlet",
    "x1_upper": "neumann",
}


@dataclass(frozen=True)
class ExactSolution:
    """Exact fields with the analytic derivatives needed for residual checks.

    ``grad_u(x, t)[a, b]`` is ``d u_a / d x_b``.
    """

    u: Callable
    p: Callable
    du_dt: Callable
    grad_u: Callable
    laplacian_u: Callable
    grad_p: Callable


@dataclass(frozen=True)
class ProblemSpec:
    """Incompressible flow problem on a box.

    Parameters
    ----------
    nu : float
        Kinematic viscosity, must be positive.
    u0 : callable
        Initial velocity ``u0(x)``.
    f, g, g_p, h_u : callable or None
        Body force, Dirichlet velocity, boundary pressure and viscous
        traction on Neumann sides.  ``None`` means zero data.
    dgdt : callable or None
        Analytic time derivative of ``g``; a BDF difference is used when absent.
    h : callable(x, t, normal) or None
        Full traction; when given alongside ``h_u`` and ``g_p`` the split
        ``h = h_u - g_p n`` is checked by :meth:`traction_split_residual`.
    """

    nu: float
    u0: Callable
    f: Optional[Callable] = None
    g: Optional[Callable] = None
    g_p: Optional[Callable] = None
    h_u: Optional[Callable] = None
    dgdt: Optional[Callable] = None
    h: Optional[Callable] = None
    exact: Optional[ExactSolution] = None
    p0: Optional[Callable] = None
    bounds: tuple = ()
    boundary: object = "dirichlet"
    name: str = "custom"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.nu) or self.nu <= 0:
            raise ValueError(f"viscosity must be positive, got {self.nu}")

    def at(self, name: str, t: float):
        """Bind data callable ``name`` to time ``t`` (``None`` stays ``None``)."""
        fn = getattr(self, name)
        if fn is None:
            return None
        return lambda x: call_data(fn, x, t)

    def traction_split_residual(self, x, normal, t: float) -> float:
        """Max of ``|h - (h_u - g_p n)|`` over the points ``x`` with unit ``normal``."""
        if self.h is None or self.h_u is None or self.g_p is None:
            raise ValueError("the traction split needs h, h_u and g_p")
        n = np.asarray(normal, dtype=float).reshape((-1,) + (1,) * (np.ndim(x) - 1))
        full = np.asarray(self.h(x, t, n))
        split = np.asarray(call_data(self.h_u, x, t)) - np.asarray(call_data(self.g_p, x, t)) * n
        return float(np.max(np.abs(full - split))) if full.size else 0.0


def manufactured_forcing_check(spec: ProblemSpec, exact: ExactSolution | None = None,
                               points=None, t: float = 0.0, n_points: int = 100,
                               seed: int = 0) -> float:
    """Max norm of ``du/dt + (u.grad)u - nu lap u + grad p - f`` at sample points.

    Points default to ``n_points`` uniform random samples in ``spec.bounds``.
    """
    exact = exact or spec.exact
    if exact is None:
        raise ValueError("an exact solution with analytic derivatives is required")
    if points is None:
        if not spec.bounds:
            raise ValueError("sample points or problem bounds are required")
        rng = np.random.default_rng(seed)
        lo = np.array([b[0] for b in spec.bounds], dtype=float)
        hi = np.array([b[1] for b in spec.bounds], dtype=float)
        points = (lo[:, None] + (hi - lo)[:, None] * rng.random((len(lo), n_points)))
    x = np.asarray(points, dtype=float)
    u = np.asarray(call_data(exact.u, x, t))
    grad = np.asarray(call_data(exact.grad_u, x, t))
    conv = np.einsum("b...,ab...->a...", u, grad)
    res = (np.asarray(call_data(exact.du_dt, x, t)) + conv
           - spec.nu * np.asarray(call_data(exact.laplacian_u, x, t))
           + np.asarray(call_data(exact.grad_p, x, t)))
    if spec.f is not None:
        res = res - np.asarray(call_data(spec.f, x, t))
    return float(np.max(np.abs(res))) if res.size else 0.0


def _tgv2d_traction(x, t, nu):
    """Viscous traction ``nu grad(u) n`` on the top side (normal +e_1)."""
    return nu * tgv.tgv2d_velocity_gradient(x, t, nu)[:, 1]


def _tgv2d_full_traction(x, t, n, nu):
    grad = tgv.tgv2d_velocity_gradient(x, t, nu)
    return nu * np.einsum("ab...,b...->a...", grad, n) - tgv.tgv2d_pressure(x, t, nu) * n


def tgv2d_problem(nu: float = 0.025) -> ProblemSpec:
    """2D Taylor-Green vortex on ``[-0.5, 0.5]^2`` with its exact boundary data."""
    u = partial(_bind_t, tgv.tgv2d_velocity, nu)
    p = partial(_bind_t, tgv.tgv2d_pressure, nu)
    exact = ExactSolution(
        u=u,
        p=p,
        du_dt=partial(_bind_t, tgv.tgv2d_velocity_rate, nu),
        grad_u=partial(_bind_t, tgv.tgv2d_velocity_gradient, nu),
        laplacian_u=partial(_bind_t, tgv.tgv2d_velocity_laplacian, nu),
        grad_p=partial(_bind_t, tgv.tgv2d_pressure_gradient, nu),
    )
    return ProblemSpec(
        nu=nu,
        u0=lambda x: tgv.tgv2d_velocity(x, 0.0, nu),
        g=u,
        g_p=p,
        h_u=partial(_bind_t, _tgv2d_traction, nu),
        dgdt=exact.du_dt,
        h=lambda x, t, n: _tgv2d_full_traction(x, t, n, nu),
        exact=exact,
        p0=lambda x: tgv.tgv2d_pressure(x, 0.0, nu),
        bounds=((-0.5, 0.5), (-0.5, 0.5)),
        boundary=dict(TGV2D_BOUNDARY),
        name="tgv2d",
        metadata={"end_time": 1.0},
    )


def _bind_t(fn, nu, x, t):
    return fn(x, t, nu)


def tgv3d_problem(reynolds: float = 1600.0) -> ProblemSpec:
    """3D Taylor-Green vortex on the periodic box ``[-pi, pi]^3``."""
    if reynolds <= 0:
        raise ValueError("Reynolds number must be positive")
    return ProblemSpec(
        nu=1.0 / reynolds,
        u0=tgv.tgv3d_velocity,
        p0=tgv.tgv3d_pressure,
        bounds=((-np.pi, np.pi),) * 3,
        boundary="periodic",
        name="tgv3d",
        metadata={"end_time": 20.0, "reynolds": reynolds},
    )


def named_problem(name: str, **kwargs) -> ProblemSpec:
    """Built-in problems ``tgv2d`` (kwarg ``nu``) and ``tgv3d`` (kwarg ``reynolds``)."""
    if name == "tgv2d":
        return tgv2d_problem(**kwargs)
    if name == "tgv3d":
        return tgv3d_problem(**kwargs)
    if name == "custom":
        raise ValueError("the custom problem is built in code: construct a ProblemSpec directly")
    raise ValueError(f"unknown problem {name!r}; choose from {PROBLEM_NAMES}")
