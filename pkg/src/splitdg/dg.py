"""Nodal tensor-product DG spaces, quadrature tables, projection and norms.

Field coefficients live in arrays of shape ``(n_cells, n_comp, n, ..., n)``
with ``n = k + 1`` Gauss-Lobatto nodes per reference axis (cell-major,
component-major within a cell).  Callables describing data take physical
points ``x`` of shape ``(dim, ...)`` and return ``(n_comp, ...)`` for vector
data or ``(...)`` for scalars.
"""
from __future__ import annotations

import inspect
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ._kernels import tensor_apply
from .basis import gauss_legendre, lagrange_basis
from .mesh import Mesh


class ZeroNormError(ArithmeticError):
    """Raised when a relative error is requested against a zero reference."""


def _apply(data, mats):
    if len(mats) == 1:
        return data @ np.asarray(mats[0]).T
    return tensor_apply(data, mats)


def call_data(fn, x, t=None):
    """Evaluate ``fn(x, t)`` or ``fn(x)``, depending on its signature."""
    if t is None:
        return fn(x)
    try:
        nparams = len(inspect.signature(fn).parameters)
    except (TypeError, ValueError):
        nparams = 2
    return fn(x, t) if nparams >= 2 else fn(x)


class FunctionSpace:
    """Discontinuous Q_k space with ``components`` fields per node."""

    def __init__(self, mesh: Mesh, degree: int, components: int = 1):
        if degree < 1:
            raise ValueError(f"polynomial degree must be >= 1, got {degree}")
        if components not in (1, mesh.dim):
            raise ValueError(f"components must be 1 or {mesh.dim}, got {components}")
        self.mesh = mesh
        self.degree = int(degree)
        self.components = int(components)
        self.basis = lagrange_basis(self.degree)
        self._tables = {}

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def n_nodes_1d(self) -> int:
        return self.degree + 1

    @property
    def block_shape(self) -> tuple:
        return (self.components,) + (self.n_nodes_1d,) * self.dim

    @property
    def shape(self) -> tuple:
        return (self.mesh.num_cells,) + self.block_shape

    @property
    def dofs_per_cell(self) -> int:
        return int(np.prod(self.block_shape))

    @property
    def n_dofs(self) -> int:
        return self.mesh.num_cells * self.dofs_per_cell

    def tables(self, n_q: int | None = None) -> "Tables":
        n_q = self.degree + 1 if n_q is None else int(n_q)
        if n_q not in self._tables:
            self._tables[n_q] = Tables(self, n_q)
        return self._tables[n_q]

    def zeros(self) -> "DGField":
        return DGField(self, np.zeros(self.shape))

    def field(self, data) -> "DGField":
        return DGField(self, np.asarray(data, dtype=float).reshape(self.shape))

    @cached_property
    def node_points(self) -> np.ndarray:
        """Physical nodal coordinates, shape (n_cells, dim, n, ..., n)."""
        return self._map_points(self.basis.nodes)

    def _map_points(self, ref_1d) -> np.ndarray:
        mesh = self.mesh
        dim = mesh.dim
        h = mesh.cell_size
        lo = mesh.cell_lower_corners()
        m = len(ref_1d)
        out = np.empty((mesh.num_cells, dim) + (m,) * dim)
        for a in range(dim):
            shape = [1] * dim
            shape[a] = m
            local = (0.5 * (np.asarray(ref_1d) + 1.0) * h[a]).reshape(shape)
            out[:, a] = lo[:, a].reshape((-1,) + (1,) * dim) + local
        return out

    def interpolate(self, fn, t=None) -> "DGField":
        return self.field(sample(fn, self.node_points, t, self.components))

    @cached_property
    def mass_1d(self) -> np.ndarray:
        tab = self.tables(self.degree + 1)
        return tab.V.T @ (tab.w[:, None] * tab.V)

    @cached_property
    def mass_1d_inv(self) -> np.ndarray:
        return np.linalg.inv(self.mass_1d)

    @cached_property
    def cell_jacobian(self) -> float:
        return float(np.prod(self.mesh.cell_size / 2.0))

    def apply_mass(self, data) -> np.ndarray:
        """Exact cell mass matrices applied block-wise."""
        data = np.asarray(data).reshape(self.shape)
        return _apply(data, [self.mass_1d] * self.dim) * self.cell_jacobian

    def apply_mass_inverse(self, data) -> np.ndarray:
        data = np.asarray(data).reshape(self.shape)
        return _apply(data, [self.mass_1d_inv] * self.dim) / self.cell_jacobian


def sample(fn, points, t=None, components=1):
    """Evaluate a data callable at ``points`` of shape (cells, dim, q...).

    Returns an array of shape (cells, components, q...).
    """
    x = np.moveaxis(points, 1, 0)
    vals = np.asarray(call_data(fn, x, t), dtype=float)
    target = (points.shape[0], components) + points.shape[2:]
    if components == 1:
        if vals.shape == target[:1] + target[2:]:
            vals = vals[:, None]
        elif vals.ndim == len(target) and vals.shape[0] == 1:
            vals = np.moveaxis(vals, 0, 1)
        return np.ascontiguousarray(np.broadcast_to(vals, target))
    vals = np.broadcast_to(vals, (components,) + target[:1] + target[2:])
    return np.ascontiguousarray(np.moveaxis(vals, 0, 1))


@dataclass
class DGField:
    space: FunctionSpace
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(self.space.shape)

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def copy(self) -> "DGField":
        return DGField(self.space, self.data.copy())


class Tables:
    """Quadrature tables for one space and one points-per-axis count.

    Volume arrays at quadrature points have shape ``(cells, comp, q, ..., q)``;
    gradients insert a direction axis after ``comp``.  Face arrays drop the
    normal reference axis.
    """

    def __init__(self, space: FunctionSpace, n_q: int):
        self.space = space
        self.n_q = n_q
        rule = gauss_legendre(n_q)
        basis = space.basis
        self.points = rule.points
        self.w = rule.weights
        self.V = basis.values(rule.points)
        self.D = basis.derivatives(rule.points)
        self.E = basis.values(np.array([-1.0, 1.0]))
        self.DE = basis.derivatives(np.array([-1.0, 1.0]))
        mesh = space.mesh
        dim = mesh.dim
        h = mesh.cell_size
        self.scale = 2.0 / h
        wt = self.w
        for _ in range(dim - 1):
            wt = np.multiply.outer(wt, self.w)
        self.wvol = wt * np.prod(h / 2.0)
        self.wface = []
        for a in range(dim):
            wf = self.w
            for _ in range(dim - 2):
                wf = np.multiply.outer(wf, self.w)
            others = [h[b] / 2.0 for b in range(dim) if b != a]
            self.wface.append(wf * np.prod(others))

    @property
    def dim(self) -> int:
        return self.space.dim

    # -- volume -------------------------------------------------------
    def values(self, data) -> np.ndarray:
        return _apply(data, [self.V] * self.dim)

    def gradient(self, data) -> np.ndarray:
        dim = self.dim
        parts = []
        for b in range(dim):
            mats = [self.V] * dim
            mats[b] = self.D
            parts.append(_apply(data, mats) * self.scale[b])
        return np.stack(parts, axis=2)

    def integrate(self, F) -> np.ndarray:
        return _apply(F * self.wvol, [self.V.T] * self.dim)

    def integrate_grad(self, G) -> np.ndarray:
        dim = self.dim
        out = None
        for b in range(dim):
            mats = [self.V.T] * dim
            mats[b] = self.D.T
            term = _apply(G[:, :, b] * self.wvol, mats) * self.scale[b]
            out = term if out is None else out + term
        return out

    @cached_property
    def volume_points(self) -> np.ndarray:
        return self.space._map_points(self.points)

    # -- faces --------------------------------------------------------
    def _tangent_apply(self, data, mats):
        if len(mats) == 0:
            return data
        return _apply(data, mats)

    def face_values(self, data, axis, side) -> np.ndarray:
        """Traces at face quadrature points; ``data`` holds only the face cells."""
        dim = self.dim
        red = np.moveaxis(data, 2 + axis, -1) @ self.E[side]
        return self._tangent_apply(red, [self.V] * (dim - 1))

    def face_gradient(self, data, axis, side) -> np.ndarray:
        dim = self.dim
        moved = np.moveaxis(data, 2 + axis, -1)
        val = moved @ self.E[side]
        dn = moved @ self.DE[side]
        tang = [b for b in range(dim) if b != axis]
        parts = [None] * dim
        parts[axis] = self._tangent_apply(dn, [self.V] * (dim - 1)) * self.scale[axis]
        for i, b in enumerate(tang):
            mats = [self.V] * (dim - 1)
            mats[i] = self.D
            parts[b] = self._tangent_apply(val, mats) * self.scale[b]
        return np.stack(parts, axis=2)

    def face_normal_derivative(self, data, axis, side) -> np.ndarray:
        """Derivative along +axis (not the outward normal) at face points."""
        dn = np.moveaxis(data, 2 + axis, -1) @ self.DE[side]
        return self._tangent_apply(dn, [self.V] * (self.dim - 1)) * self.scale[axis]

    def _lift(self, red, axis, vec):
        return np.moveaxis(red[..., None] * vec, -1, 2 + axis)

    def face_integrate(self, F, axis, side) -> np.ndarray:
        """Integrate ``F`` against every test function of the face cells."""
        red = self._tangent_apply(F * self.wface[axis], [self.V.T] * (self.dim - 1))
        return self._lift(red, axis, self.E[side])

    def face_integrate_normal_derivative(self, F, axis, side) -> np.ndarray:
        """Integrate ``F`` against d(test)/dx_axis on the face."""
        red = self._tangent_apply(F * self.wface[axis], [self.V.T] * (self.dim - 1))
        return self._lift(red, axis, self.DE[side]) * self.scale[axis]

    def face_integrate_grad(self, G, axis, side) -> np.ndarray:
        """Integrate sum_b G_b * d(test)/dx_b on the face."""
        dim = self.dim
        tang = [b for b in range(dim) if b != axis]
        out = self.face_integrate_normal_derivative(G[:, :, axis], axis, side)
        for i, b in enumerate(tang):
            mats = [self.V.T] * (dim - 1)
            mats[i] = self.D.T
            red = self._tangent_apply(G[:, :, b] * self.wface[axis], mats) * self.scale[b]
            out = out + self._lift(red, axis, self.E[side])
        return out

    def face_points(self, cells, axis, side) -> np.ndarray:
        """Physical face quadrature points, shape (len(cells), dim, q...)."""
        mesh = self.space.mesh
        dim = mesh.dim
        h = mesh.cell_size
        lo = mesh.cell_lower_corners()[cells]
        m = self.n_q
        out = np.empty((len(cells), dim) + (m,) * (dim - 1))
        tang = [b for b in range(dim) if b != axis]
        for b in range(dim):
            if b == axis:
                off = np.full((1,) * (dim - 1), side * h[b])
            else:
                shape = [1] * (dim - 1)
                shape[tang.index(b)] = m
                off = (0.5 * (self.points + 1.0) * h[b]).reshape(shape)
            out[:, b] = lo[:, b].reshape((-1,) + (1,) * (dim - 1)) + off
        return out


def evaluate_field(field: DGField, cell: int, points, gradient: bool = False):
    """Evaluate ``field`` on one cell at reference ``points`` of shape (npts, dim).

    Returns values ``(npts, n_comp)`` and, if requested, physical gradients
    ``(npts, n_comp, dim)``.
    """
    space = field.space
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dim = space.dim
    block = field.data[cell]
    phi = [space.basis.values(pts[:, a]) for a in range(dim)]
    dphi = [space.basis.derivatives(pts[:, a]) for a in range(dim)]
    scale = 2.0 / space.mesh.cell_size

    def contract(tabs):
        if dim == 2:
            return np.einsum("pi,pj,cij->pc", tabs[0], tabs[1], block)
        return np.einsum("pi,pj,pk,cijk->pc", tabs[0], tabs[1], tabs[2], block)

    vals = contract(phi)
    if not gradient:
        return vals
    grads = []
    for b in range(dim):
        tabs = list(phi)
        tabs[b] = dphi[b]
        grads.append(contract(tabs) * scale[b])
    return vals, np.stack(grads, axis=-1)


def l2_project(fn, space: FunctionSpace, t=None, n_q: int | None = None) -> DGField:
    """Cell-wise L2 projection of a callable onto ``space``."""
    tab = space.tables(n_q or space.degree + 2)
    vals = sample(fn, tab.volume_points, t, space.components)
    rhs = tab.integrate(vals)
    return space.field(space.apply_mass_inverse(rhs))


def project_quadrature_values(values, space: FunctionSpace, n_q: int) -> DGField:
    """L2 projection of values already sampled at the volume points of ``n_q``."""
    rhs = space.tables(n_q).integrate(values)
    return space.field(space.apply_mass_inverse(rhs))


def _l2_norm_sq(vals, tab):
    return float(np.sum(np.sum(vals**2, axis=1) * tab.wvol))


def l2_norm(field: DGField, n_q: int | None = None) -> float:
    tab = field.space.tables(n_q or field.space.degree + 2)
    return np.sqrt(_l2_norm_sq(tab.values(field.data), tab))


def relative_l2_error(field: DGField, exact, t=None, relative: bool = True) -> float:
    """``||exact - field|| / ||exact||`` over the mesh, with k+3 points per axis.

    With ``relative=False`` the absolute error norm is returned.
    """
    space = field.space
    tab = space.tables(space.degree + 3)
    ex = sample(exact, tab.volume_points, t, space.components)
    err = np.sqrt(_l2_norm_sq(ex - tab.values(field.data), tab))
    if not relative:
        return err
    ref = np.sqrt(_l2_norm_sq(ex, tab))
    if ref == 0.0:
        raise ZeroNormError("exact solution has zero L2 norm; request the absolute error instead")
    return err / ref


def divergence_l2_norm(u: DGField) -> float:
    """Broken L2 norm of the divergence of a vector field."""
    space = u.space
    if space.components != space.dim:
        raise ValueError("divergence needs a vector-valued field")
    tab = space.tables(space.degree + 1)
    g = tab.gradient(u.data)
    div = sum(g[:, b, b] for b in range(space.dim))
    return float(np.sqrt(np.sum(div**2 * tab.wvol)))


def integrate_field(field: DGField) -> np.ndarray:
    """Per-component integral over the mesh."""
    tab = field.space.tables(field.space.degree + 1)
    vals = tab.values(field.data)
    weighted = vals * tab.wvol
    return weighted.sum(axis=(0,) + tuple(range(2, weighted.ndim)))
