"""Momentum-step operators: left-hand side pieces and right-hand side data terms."""
from __future__ import annotations

import numpy as np

from ..dg import DGField, sample
from .base import Discretization, scatter_boundary, scatter_interior, sipg_apply, sipg_tau


def _vec(disc, u):
    if isinstance(u, DGField):
        return u.data
    return np.asarray(u, dtype=float).reshape(disc.velocity.shape)


def apply_mass(disc: Discretization, u, gamma0: float, dt: float) -> np.ndarray:
    """``(gamma0 / dt) (u, v)``, integrated exactly."""
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")
    return (gamma0 / dt) * disc.velocity.apply_mass(_vec(disc, u)).reshape(-1)


def cell_mean_speed(disc: Discretization, u_star) -> np.ndarray:
    """Norm of the cell-averaged extrapolated velocity, one value per cell."""
    space = disc.velocity
    tab = space.tables(disc.nq_lin)
    vals = tab.values(_vec(disc, u_star))
    axes = tuple(range(2, vals.ndim))
    means = np.sum(vals * tab.wvol, axis=axes) / disc.mesh.cell_volume
    return np.sqrt(np.sum(means**2, axis=1))


def divergence_penalty_factor(disc: Discretization, u_star) -> np.ndarray:
    """``zeta_D h_e |mean u*| / (k_u + 1)`` per cell."""
    pen = disc.penalty
    return pen.zeta_d * disc.mesh.h_e * cell_mean_speed(disc, u_star) / (disc.k_u + 1)


def lax_friedrichs_lambda(w_minus, w_plus, zeta_lf: float):
    """Local Lax-Friedrichs coefficient ``zeta * max(|w-.n|, |w+.n|)``."""
    return zeta_lf * np.maximum(np.abs(w_minus), np.abs(w_plus))


def apply_convective(disc: Discretization, u, u_star, form: str | None = None) -> np.ndarray:
    """Convective term linearized around ``u_star`` (upwind or local Lax-Friedrichs)."""
    form = form or disc.convection.form
    if form not in ("convective", "divergence"):
        raise ValueError(f"unknown convective form {form!r}")
    tab = disc.velocity.tables(disc.nq_nl)
    ud = _vec(disc, u)
    wd = _vec(disc, u_star)
    w = tab.values(wd)
    if form == "convective":
        grad = tab.gradient(ud)
        out = tab.integrate(np.einsum("cb...,cab...->ca...", w, grad))
    else:
        uv = tab.values(ud)
        out = tab.integrate_grad(-np.einsum("ca...,cb...->cab...", uv, w))
    zeta_lf = disc.penalty.zeta_lf
    for af in disc.mesh.axis_faces:
        a = af.axis
        uo = tab.face_values(ud[af.owner], a, 1)
        un = tab.face_values(ud[af.neighbor], a, 0)
        wo = tab.face_values(wd[af.owner], a, 1)[:, a:a + 1]
        wn = tab.face_values(wd[af.neighbor], a, 0)[:, a:a + 1]
        jump = uo - un
        if form == "convective":
            s = 0.5 * (wo + wn)
            f_o = 0.5 * (np.abs(s) - s) * jump
            f_n = -0.5 * (np.abs(s) + s) * jump
        else:
            lam = lax_friedrichs_lambda(wo, wn, zeta_lf)
            f_o = 0.5 * (uo * wo + un * wn) + 0.5 * lam * jump
            f_n = -f_o
        scatter_interior(out, tab, af, f_o, f_n)
    for side in disc.dirichlet:
        a, s = side.axis, side.side
        ub = tab.face_values(ud[side.cells], a, s)
        wnrm = side.normal_sign * tab.face_values(wd[side.cells], a, s)[:, a:a + 1]
        if form == "convective":
            scatter_boundary(out, tab, side, (np.abs(wnrm) - wnrm) * ub)
        else:
            scatter_boundary(out, tab, side, np.abs(wnrm) * ub)
    if form == "divergence":
        for side in disc.neumann:
            a, s = side.axis, side.side
            ub = tab.face_values(ud[side.cells], a, s)
            wnrm = side.normal_sign * tab.face_values(wd[side.cells], a, s)[:, a:a + 1]
            scatter_boundary(out, tab, side, wnrm * ub)
    return out.reshape(-1)


def convective_rhs(disc: Discretization, u_star, g) -> np.ndarray:
    """Dirichlet data part of the convective term (moved to the right-hand side)."""
    tab = disc.velocity.tables(disc.nq_nl)
    wd = _vec(disc, u_star)
    out = np.zeros(disc.velocity.shape)
    if g is None:
        return out.reshape(-1)
    for side in disc.dirichlet:
        a, s = side.axis, side.side
        gb = disc.boundary_values(g, tab, side, disc.dim)
        wnrm = side.normal_sign * tab.face_values(wd[side.cells], a, s)[:, a:a + 1]
        # both forms reduce to (|u*.n| - u*.n) g on Dirichlet sides
        scatter_boundary(out, tab, side, (np.abs(wnrm) - wnrm) * gb)
    return out.reshape(-1)


def apply_viscous_sipg(disc: Discretization, u, nu: float) -> np.ndarray:
    """SIPG viscous operator with weak Dirichlet terms (zero data) on Dirichlet sides."""
    tab = disc.velocity.tables(disc.nq_lin)
    return sipg_apply(tab, _vec(disc, u), nu, disc.dirichlet, disc.k_u, disc.mesh).reshape(-1)


def viscous_rhs(disc: Discretization, g, h_u, nu: float) -> np.ndarray:
    """Dirichlet data of the SIPG viscous term plus the viscous traction on Neumann sides."""
    tab = disc.velocity.tables(disc.nq_lin)
    out = np.zeros(disc.velocity.shape)
    if g is not None:
        for side in disc.dirichlet:
            tau = sipg_tau(disc.mesh, side.axis, disc.k_u)
            gb = disc.boundary_values(g, tab, side, disc.dim)
            scatter_boundary(out, tab, side, 2.0 * nu * tau * gb, -nu * side.normal_sign * gb)
    if h_u is not None:
        for side in disc.neumann:
            scatter_boundary(out, tab, side, disc.boundary_values(h_u, tab, side, disc.dim))
    return out.reshape(-1)


def apply_divergence_penalty(disc: Discretization, u, u_star, factor=None) -> np.ndarray:
    """``(delta_e div u, div v)`` with the cell factor from :func:`divergence_penalty_factor`."""
    tab = disc.velocity.tables(disc.nq_lin)
    if factor is None:
        factor = divergence_penalty_factor(disc, u_star)
    grad = tab.gradient(_vec(disc, u))
    div = sum(grad[:, b, b] for b in range(disc.dim))
    scaled = factor.reshape((-1,) + (1,) * (div.ndim - 1)) * div
    G = np.zeros_like(grad)
    for b in range(disc.dim):
        G[:, b, b] = scaled
    return tab.integrate_grad(G).reshape(-1)


def _face_speed(speed, af):
    return 0.5 * (speed[af.owner] + speed[af.neighbor])


def _bcast(v, ndim):
    return v.reshape((-1,) + (1,) * (ndim - 1))


def apply_continuity_penalty(disc: Discretization, u, u_star, speed=None) -> np.ndarray:
    """Normal-jump penalty on interior faces and against zero data on Dirichlet sides.

    The face coefficient on interior faces is the mean of the two cells'
    ``|mean u*|``.
    """
    tab = disc.velocity.tables(disc.nq_lin)
    ud = _vec(disc, u)
    if speed is None:
        speed = cell_mean_speed(disc, u_star)
    zeta = disc.penalty.zeta_c
    out = np.zeros(disc.velocity.shape)
    for af in disc.mesh.axis_faces:
        a = af.axis
        jn = tab.face_values(ud[af.owner], a, 1)[:, a] - tab.face_values(ud[af.neighbor], a, 0)[:, a]
        coef = zeta * _bcast(_face_speed(speed, af), jn.ndim) * jn
        f_o = np.zeros((len(af.owner), disc.dim) + jn.shape[1:])
        f_o[:, a] = coef
        scatter_interior(out, tab, af, f_o, -f_o)
    for side in disc.dirichlet:
        a, s = side.axis, side.side
        un = tab.face_values(ud[side.cells], a, s)[:, a]
        f = np.zeros((len(side.cells), disc.dim) + un.shape[1:])
        f[:, a] = 2.0 * zeta * _bcast(speed[side.cells], un.ndim) * un
        scatter_boundary(out, tab, side, f)
    return out.reshape(-1)


def continuity_penalty_rhs(disc: Discretization, u_star, g, speed=None) -> np.ndarray:
    tab = disc.velocity.tables(disc.nq_lin)
    out = np.zeros(disc.velocity.shape)
    if g is None:
        return out.reshape(-1)
    if speed is None:
        speed = cell_mean_speed(disc, u_star)
    zeta = disc.penalty.zeta_c
    for side in disc.dirichlet:
        a = side.axis
        gb = disc.boundary_values(g, tab, side, disc.dim)
        f = np.zeros_like(gb)
        f[:, a] = 2.0 * zeta * _bcast(speed[side.cells], gb[:, a].ndim) * gb[:, a]
        scatter_boundary(out, tab, side, f)
    return out.reshape(-1)


def pressure_gradient_rhs(disc: Discretization, p, g_p=None) -> np.ndarray:
    """Pressure term integrated by parts twice, tested with velocity functions."""
    tv = disc.velocity.tables(disc.nq_lin)
    tp = disc.pressure.tables(disc.nq_lin)
    pd = p.data if isinstance(p, DGField) else np.asarray(p).reshape(disc.pressure.shape)
    gp = tp.gradient(pd)[:, 0]
    out = -tv.integrate(gp)
    dim = disc.dim
    for af in disc.mesh.axis_faces:
        a = af.axis
        jump = tp.face_values(pd[af.owner], a, 1)[:, 0] - tp.face_values(pd[af.neighbor], a, 0)[:, 0]
        f = np.zeros((len(af.owner), dim) + jump.shape[1:])
        f[:, a] = 0.5 * jump
        scatter_interior(out, tv, af, f, f)
    for side in disc.neumann:
        a, s = side.axis, side.side
        pb = tp.face_values(pd[side.cells], a, s)[:, 0]
        if g_p is not None:
            pb = pb - disc.boundary_values(g_p, tp, side, 1)[:, 0]
        f = np.zeros((len(side.cells), dim) + pb.shape[1:])
        f[:, a] = side.normal_sign * pb
        scatter_boundary(out, tv, side, f)
    return out.reshape(-1)


def forcing_rhs(disc: Discretization, f) -> np.ndarray:
    tab = disc.velocity.tables(disc.nq_lin)
    if f is None:
        return np.zeros(disc.velocity.n_dofs)
    return tab.integrate(sample(f, tab.volume_points, None, disc.dim)).reshape(-1)


def history_rhs(disc: Discretization, history, alpha, dt: float) -> np.ndarray:
    """``(sum_i alpha_i / dt u^{n+1-i}, v)``."""
    acc = np.zeros(disc.velocity.shape)
    for a, u in zip(alpha, history):
        acc += (a / dt) * _vec(disc, u)
    return disc.velocity.apply_mass(acc).reshape(-1)
