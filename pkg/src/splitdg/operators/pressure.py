"""Pressure Poisson operator, its right-hand side terms and the vorticity path."""
from __future__ import annotations

import numpy as np

from ..dg import DGField, FunctionSpace, project_quadrature_values, sample
from .base import Discretization, interior_traces, scatter_boundary, scatter_interior, sipg_apply, sipg_tau

PPE_FLUXES = ("central", "upwind")


def apply_ppe_lhs(disc: Discretization, p) -> np.ndarray:
    """SIPG Laplacian on the pressure space; Neumann velocity sides fix p weakly."""
    space = disc.pressure
    data = np.asarray(p.data if isinstance(p, DGField) else p).reshape(space.shape)
    tab = space.tables(disc.k_p + 1)
    return sipg_apply(tab, data, 1.0, disc.neumann, disc.k_p, disc.mesh).reshape(-1)


def ppe_operator(disc: Discretization):
    return lambda x: apply_ppe_lhs(disc, x)


def _vector_at(disc, u, n_q):
    tab = disc.velocity.tables(n_q)
    data = u.data if isinstance(u, DGField) else np.asarray(u).reshape(disc.velocity.shape)
    return tab, data


def ppe_rhs_forcing(disc: Discretization, f) -> np.ndarray:
    """Weak form of ``-div f``: ``(f, grad q) - <f.n, q>`` on interior and Neumann faces."""
    space = disc.pressure
    out = np.zeros(space.shape)
    if f is None:
        return out.reshape(-1)
    n_q = disc.nq_lin
    tq = space.tables(n_q)
    dim = disc.dim
    fv = sample(f, tq.volume_points, None, dim)
    out += tq.integrate_grad(fv[:, None])
    for af in disc.mesh.axis_faces:
        a = af.axis
        fa = sample(f, tq.face_points(af.owner, a, 1), None, dim)[:, a:a + 1]
        scatter_interior(out, tq, af, -fa, fa)
    for side in disc.neumann:
        fv_b = disc.boundary_values(f, tq, side, dim)[:, side.axis:side.axis + 1]
        scatter_boundary(out, tq, side, -side.normal_sign * fv_b)
    return out.reshape(-1)


def convective_term_at_points(grad, vals):
    """``(u . grad) u`` from gradients (c, comp, dir, q...) and values (c, comp, q...)."""
    return np.einsum("cb...,cab...->ca...", vals, grad)


def ppe_rhs_convective(disc: Discretization, u, flux: str = "central") -> np.ndarray:
    """One history slot of the integrated-by-parts divergence of ``(u . grad) u``.

    Dirichlet faces carry no term; they cancel against the consistent
    boundary condition.  ``flux="upwind"`` swaps the face average for the
    upwind trace (diagnostic only).
    """
    if flux not in PPE_FLUXES:
        raise ValueError(f"unknown PPE flux {flux!r}")
    space = disc.pressure
    tab, data = _vector_at(disc, u, disc.nq_nl)
    tq = space.tables(disc.nq_nl)
    out = np.zeros(space.shape)
    conv = convective_term_at_points(tab.gradient(data), tab.values(data))
    out -= tq.integrate_grad(conv[:, None])
    for af in disc.mesh.axis_faces:
        a = af.axis
        uo, un = data[af.owner], data[af.neighbor]
        co = convective_term_at_points(tab.face_gradient(uo, a, 1), tab.face_values(uo, a, 1))[:, a:a + 1]
        cn = convective_term_at_points(tab.face_gradient(un, a, 0), tab.face_values(un, a, 0))[:, a:a + 1]
        if flux == "central":
            cf = 0.5 * (co + cn)
        else:
            w = 0.5 * (tab.face_values(uo, a, 1)[:, a:a + 1] + tab.face_values(un, a, 0)[:, a:a + 1])
            cf = np.where(w >= 0.0, co, cn)
        scatter_interior(out, tq, af, cf, -cf)
    for side in disc.neumann:
        a, s = side.axis, side.side
        ub = data[side.cells]
        cb = convective_term_at_points(tab.face_gradient(ub, a, s), tab.face_values(ub, a, s))[:, a:a + 1]
        scatter_boundary(out, tq, side, side.normal_sign * cb)
    return out.reshape(-1)


def ppe_rhs_leray(disc: Discretization, u) -> np.ndarray:
    """One history slot of the weak divergence ``-(grad q, u) + <q, {u}.n>``.

    The Dirichlet contribution cancels with the history part of the BDF
    boundary acceleration, so it is left out here and in ``ppe_rhs_sipg``.
    """
    space = disc.pressure
    tab, data = _vector_at(disc, u, disc.nq_lin)
    tq = space.tables(disc.nq_lin)
    out = -tq.integrate_grad(tab.values(data)[:, None])
    for af in disc.mesh.axis_faces:
        a = af.axis
        uo, un = interior_traces(tab, data, af)
        avg = 0.5 * (uo[:, a:a + 1] + un[:, a:a + 1])
        scatter_interior(out, tq, af, avg, -avg)
    for side in disc.neumann:
        a, s = side.axis, side.side
        ub = tab.face_values(data[side.cells], a, s)[:, a:a + 1]
        scatter_boundary(out, tq, side, side.normal_sign * ub)
    return out.reshape(-1)


def curl_at_points(grad):
    """Curl from gradients (c, comp, dir, q...); 2D returns one component."""
    if grad.shape[1] == 2:
        return (grad[:, 1, 0] - grad[:, 0, 1])[:, None]
    return np.stack(
        [
            grad[:, 2, 1] - grad[:, 1, 2],
            grad[:, 0, 2] - grad[:, 2, 0],
            grad[:, 1, 0] - grad[:, 0, 1],
        ],
        axis=1,
    )


def curl_of_scalar_or_vector(grad, dim):
    """Curl of the vorticity: scalar in 2D (rotated gradient), vector in 3D."""
    if dim == 2:
        return np.stack([grad[:, 0, 1], -grad[:, 0, 0]], axis=1)
    return curl_at_points(grad)


def vorticity_space(disc: Discretization) -> FunctionSpace:
    if not hasattr(disc, "_vorticity_space"):
        comps = 1 if disc.dim == 2 else 3
        disc._vorticity_space = FunctionSpace(disc.mesh, disc.k_u, comps)
    return disc._vorticity_space


def vorticity_projection(disc: Discretization, u) -> DGField:
    """Element-wise L2 projection of ``curl u`` into the velocity-degree space."""
    tab, data = _vector_at(disc, u, disc.nq_lin)
    w = curl_at_points(tab.gradient(data))
    return project_quadrature_values(w, vorticity_space(disc), disc.nq_lin)


def curl_curl_on_side(disc: Discretization, omega: DGField, side, n_q=None):
    """``curl omega`` at the face points of one boundary side, (c, dim, q...)."""
    tab = omega.space.tables(n_q or disc.nq_lin)
    g = tab.face_gradient(omega.data[side.cells], side.axis, side.side)
    return curl_of_scalar_or_vector(g, disc.dim)


def ppe_rhs_sipg(disc: Discretization, g_p=None, accel=None, omega: DGField | None = None, nu: float = 0.0):
    """Inhomogeneous boundary terms of the pressure Poisson problem.

    Parameters
    ----------
    g_p : callable(x) or None
        Boundary pressure on Neumann (traction) sides.
    accel : callable(x) or None
        Boundary acceleration whose normal part enters on Dirichlet sides:
        ``gamma0 / dt * g^{n+1}`` when the Leray terms are active, the full
        time derivative of ``g`` otherwise.
    omega : DGField or None
        Projected vorticity of the extrapolated velocity.
    """
    space = disc.pressure
    tq = space.tables(disc.nq_lin)
    out = np.zeros(space.shape)
    for side in disc.neumann:
        if g_p is None:
            continue
        a = side.axis
        sig = side.normal_sign
        tau = sipg_tau(disc.mesh, a, disc.k_p)
        gp = disc.boundary_values(g_p, tq, side, 1)
        scatter_boundary(out, tq, side, 2.0 * tau * gp, -sig * gp)
    for side in disc.dirichlet:
        a = side.axis
        sig = side.normal_sign
        term = np.zeros((len(side.cells), 1) + (disc.nq_lin,) * (disc.dim - 1))
        if accel is not None:
            term -= sig * disc.boundary_values(accel, tq, side, disc.dim)[:, a:a + 1]
        if omega is not None and nu != 0.0:
            cc = curl_curl_on_side(disc, omega, side)
            term -= nu * sig * cc[:, a:a + 1]
        scatter_boundary(out, tq, side, term)
    return out.reshape(-1)
