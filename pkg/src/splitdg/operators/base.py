"""Shared discretization state for the pressure and momentum operators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dg import FunctionSpace, sample
from ..mesh import BoundaryTag, Mesh

CONVECTIVE_FORMS = ("convective", "divergence")
CONVECTION_MODES = ("explicit", "semi_implicit", "implicit")


@dataclass(frozen=True)
class PenaltyConfig:
    zeta_d: float = 1.0
    zeta_c: float = 1.0
    zeta_lf: float = 0.5
    enable_div: bool = True
    enable_cont: bool = True

    def __post_init__(self):
        for name in ("zeta_d", "zeta_c", "zeta_lf"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class ConvectionConfig:
    form: str = "convective"
    mode: str = "semi_implicit"
    picard_tol: float = 1e-8
    picard_max_iter: int = 25

    def __post_init__(self):
        if self.form not in CONVECTIVE_FORMS:
            raise ValueError(f"unknown convective form {self.form!r}; choose from {CONVECTIVE_FORMS}")
        if self.mode not in CONVECTION_MODES:
            raise ValueError(f"unknown convection mode {self.mode!r}; choose from {CONVECTION_MODES}")
        if self.mode == "implicit" and self.picard_max_iter < 1:
            raise ValueError("implicit convection needs a Picard iteration budget > 0")


def sipg_tau(mesh: Mesh, axis: int, degree: int) -> float:
    """Interior penalty ``(k+1)^2 |face| / |cell|``, max over the adjacent cells.

    On the uniform lattice both cells agree, so the max is the common value.
    """
    h = mesh.cell_size
    face_area = float(np.prod([h[b] for b in range(mesh.dim) if b != axis]))
    return (degree + 1) ** 2 * face_area / mesh.cell_volume


class Discretization:
    """Velocity/pressure spaces plus quadrature choices for one mesh.

    Parameters
    ----------
    mesh : Mesh
    k_u : int
        Velocity degree; the pressure degree is ``k_u - 1``.
    overintegration : int
        Extra points per axis for terms containing the extrapolated velocity.
    """

    def __init__(self, mesh: Mesh, k_u: int, penalty: PenaltyConfig | None = None,
                 convection: ConvectionConfig | None = None, overintegration: int = 1):
        if k_u < 2:
            raise ValueError("k_u must be >= 2 so that k_p = k_u - 1 >= 1")
        self.mesh = mesh
        self.k_u = k_u
        self.k_p = k_u - 1
        self.velocity = FunctionSpace(mesh, k_u, mesh.dim)
        self.pressure = FunctionSpace(mesh, self.k_p, 1)
        self.penalty = penalty or PenaltyConfig()
        self.convection = convection or ConvectionConfig()
        self.nq_lin = k_u + 1
        self.nq_nl = k_u + 1 + int(overintegration)
        self.dirichlet = mesh.sides_with(BoundaryTag.DIRICHLET)
        self.neumann = mesh.sides_with(BoundaryTag.NEUMANN)

    @property
    def dim(self) -> int:
        return self.mesh.dim

    @property
    def pressure_singular(self) -> bool:
        """True when no boundary fixes the pressure level (no Neumann side)."""
        return len(self.neumann) == 0

    def boundary_values(self, fn, tab, side, components):
        """Data callable ``fn(x)`` at the face points of one boundary side."""
        pts = tab.face_points(side.cells, side.axis, side.side)
        if fn is None:
            return np.zeros((len(side.cells), components) + pts.shape[2:])
        return sample(fn, pts, None, components)


def interior_traces(tab, data, af):
    """Owner (upper side) and neighbor (lower side) traces on one axis' faces."""
    a = af.axis
    return tab.face_values(data[af.owner], a, 1), tab.face_values(data[af.neighbor], a, 0)


def scatter_interior(out, tab, af, f_owner, f_neighbor, g_owner=None, g_neighbor=None):
    """Add face integrals against test values (and d/dx_axis of tests)."""
    a = af.axis
    add_o = tab.face_integrate(f_owner, a, 1)
    add_n = tab.face_integrate(f_neighbor, a, 0)
    if g_owner is not None:
        add_o = add_o + tab.face_integrate_normal_derivative(g_owner, a, 1)
        add_n = add_n + tab.face_integrate_normal_derivative(g_neighbor, a, 0)
    out[af.owner] += add_o
    out[af.neighbor] += add_n


def scatter_boundary(out, tab, side, f, g=None):
    a, s = side.axis, side.side
    add = tab.face_integrate(f, a, s)
    if g is not None:
        add = add + tab.face_integrate_normal_derivative(g, a, s)
    out[side.cells] += add


def sipg_apply(tab, data, coeff, dirichlet_sides, degree, mesh):
    """Symmetric interior penalty Laplacian ``coeff * (-div grad)`` per component.

    Sides in ``dirichlet_sides`` get the weak Dirichlet terms with the
    boundary value set to zero; all other boundary sides are natural.
    """
    out = tab.integrate_grad(coeff * tab.gradient(data))
    for af in mesh.axis_faces:
        a = af.axis
        tau = sipg_tau(mesh, a, degree)
        uo = data[af.owner]
        un = data[af.neighbor]
        jo = tab.face_values(uo, a, 1) - tab.face_values(un, a, 0)
        avg_dn = 0.5 * (tab.face_normal_derivative(uo, a, 1) + tab.face_normal_derivative(un, a, 0))
        f_o = coeff * (-avg_dn + tau * jo)
        g_o = -0.5 * coeff * jo
        scatter_interior(out, tab, af, f_o, -f_o, g_o, g_o)
    for side in dirichlet_sides:
        a, s = side.axis, side.side
        sig = side.normal_sign
        tau = sipg_tau(mesh, a, degree)
        u = data[side.cells]
        val = tab.face_values(u, a, s)
        dn = tab.face_normal_derivative(u, a, s)
        scatter_boundary(out, tab, side, coeff * (-sig * dn + 2.0 * tau * val), -coeff * sig * val)
    return out
