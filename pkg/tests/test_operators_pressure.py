import numpy as np
import pytest

from splitdg.mesh import build_cartesian_mesh
from splitdg.operators import (
    apply_ppe_lhs,
    curl_curl_on_side,
    ppe_operator,
    ppe_rhs_convective,
    ppe_rhs_forcing,
    ppe_rhs_leray,
    ppe_rhs_sipg,
    sipg_tau,
    vorticity_projection,
)
from splitdg.operators.base import Discretization

from conftest import dense_matrix, single_cell_disc
from oracle import Cell2D, relative_gap

ALL_SIDES = {(0, 0), (0, 1), (1, 0), (1, 1)}
MIXED = {(0, 0): "dirichlet", (0, 1): "dirichlet", (1, 0): "dirichlet", (1, 1): "neumann"}
ORACLE_TOL = 1e-11


def vec_field(disc, fn):
    return disc.velocity.interpolate(fn)


# -- penalty parameter -------------------------------------------------------------


def test_sipg_tau_examples():
    cube = build_cartesian_mesh(((0, 1),) * 3, [1, 1, 1], "dirichlet")
    assert sipg_tau(cube, 0, 1) == pytest.approx(4.0, rel=1e-15)
    square = build_cartesian_mesh(((0, 1),) * 2, [2, 2], "dirichlet")
    assert sipg_tau(square, 1, 2) == pytest.approx(18.0, rel=1e-15)
    assert sipg_tau(square, 0, 0) == pytest.approx(0.5 / 0.25, rel=1e-15)


# -- left-hand side ----------------------------------------------------------------


@pytest.mark.parametrize("k_u", [2, 3, 4])
@pytest.mark.parametrize("geom", [((0.0, 0.0), (1.0, 1.0)), ((-0.3, 0.2), (0.5, 0.25))])
def test_ppe_lhs_dense_oracle(k_u, geom):
    lower, size = geom
    disc = single_cell_disc(k_u, "neumann", lower, size)
    cell = Cell2D(disc.k_p, lower, size)
    A = dense_matrix(ppe_operator(disc), disc.pressure.n_dofs)
    assert relative_gap(A, cell.sipg_matrix(ALL_SIDES)) <= ORACLE_TOL


@pytest.mark.parametrize("boundary", ["dirichlet", "periodic"])
def test_ppe_lhs_constant_nullspace(boundary):
    mesh = build_cartesian_mesh(((0, 1),) * 2, [3, 3], boundary)
    disc = Discretization(mesh, 3)
    c = disc.pressure.interpolate(lambda x: 2.5 + 0 * x[0])
    assert np.abs(apply_ppe_lhs(disc, c)).max() <= 1e-13 * 2.5 * 100


def test_ppe_lhs_constant_with_neumann_segment():
    disc = single_cell_disc(3, MIXED, (0.0, 0.0), (0.5, 0.5))
    cell = Cell2D(disc.k_p, (0.0, 0.0), (0.5, 0.5))
    c = 1.7
    got = apply_ppe_lhs(disc, disc.pressure.interpolate(lambda x: c + 0 * x[0]))
    expected = cell.boundary_terms(lambda x: c + 0 * x[0], {(1, 1)})
    assert relative_gap(got, expected) <= ORACLE_TOL


@pytest.mark.parametrize("boundary", [MIXED, "periodic", "neumann"])
def test_ppe_lhs_symmetry(boundary, rng):
    mesh = build_cartesian_mesh(((-0.5, 0.5),) * 2, [3, 4], boundary)
    disc = Discretization(mesh, 3)
    n = disc.pressure.n_dofs
    A = ppe_operator(disc)
    for _ in range(20):
        x, y = rng.normal(size=n), rng.normal(size=n)
        a, b = y @ A(x), x @ A(y)
        assert abs(a - b) <= 1e-11 * max(abs(a), abs(b))


def test_ppe_lhs_positive_semidefinite(rng):
    mesh = build_cartesian_mesh(((0, 1),) * 2, [3, 3], MIXED)
    disc = Discretization(mesh, 2)
    A = dense_matrix(ppe_operator(disc), disc.pressure.n_dofs)
    assert np.linalg.eigvalsh(0.5 * (A + A.T)).min() > 0.0


# -- right-hand side pieces ----------------------------------------------------------


def test_forcing_zero():
    disc = single_cell_disc(3, "neumann")
    assert np.all(ppe_rhs_forcing(disc, None) == 0.0)
    assert np.all(ppe_rhs_forcing(disc, lambda x: np.zeros((2,) + x.shape[1:])) == 0.0)


def test_forcing_constant_periodic():
    mesh = build_cartesian_mesh(((0, 1),) * 2, [4, 4], "periodic")
    disc = Discretization(mesh, 3)
    r = ppe_rhs_forcing(disc, lambda x: np.stack([1.3 + 0 * x[0], -0.4 + 0 * x[0]]))
    assert np.abs(r).max() <= 1e-12


@pytest.mark.parametrize("k_u", [2, 3])
def test_forcing_dense_oracle(k_u):
    disc = single_cell_disc(k_u, "neumann", (0.2, -0.1), (0.5, 0.5))
    cell = Cell2D(disc.k_p, (0.2, -0.1), (0.5, 0.5))

    def f(x):
        return np.stack([x[0], 0 * x[0]])

    assert relative_gap(ppe_rhs_forcing(disc, f), cell.weak_divergence(f)) <= ORACLE_TOL


def test_convective_vanishing_cases():
    mesh = build_cartesian_mesh(((0, 1),) * 2, [3, 3], MIXED)
    disc = Discretization(mesh, 3)
    const = vec_field(disc, lambda x: np.stack([1 + 0 * x[0], 2 + 0 * x[0]]))
    assert np.abs(ppe_rhs_convective(disc, const)).max() <= 1e-13
    shear = vec_field(disc, lambda x: np.stack([x[1], 0 * x[0]]))
    assert np.abs(ppe_rhs_convective(disc, shear)).max() <= 1e-13


def test_convective_dense_oracle():
    disc = single_cell_disc(3, "neumann", (0.0, 0.0), (1.0, 1.0))
    cell = Cell2D(disc.k_p)
    u = vec_field(disc, lambda x: np.stack([x[0], -x[1]]))
    # (u . grad) u = (x1, x2); the term is the weak divergence -(c, grad q) + <c.n, q>
    expected = -cell.weak_divergence(lambda x: np.stack([x[0], x[1]]))
    assert relative_gap(ppe_rhs_convective(disc, u), expected) <= ORACLE_TOL


def test_convective_flux_choice():
    disc = single_cell_disc(3, "neumann")
    with pytest.raises(ValueError):
        ppe_rhs_convective(disc, disc.velocity.zeros(), flux="centred")


def test_leray_cases():
    mesh = build_cartesian_mesh(((0, 1),) * 2, [4, 4], "periodic")
    disc = Discretization(mesh, 3)
    assert np.all(ppe_rhs_leray(disc, disc.velocity.zeros()) == 0.0)
    const = vec_field(disc, lambda x: np.stack([0.7 + 0 * x[0], -1.1 + 0 * x[0]]))
    assert np.abs(ppe_rhs_leray(disc, const)).max() <= 1e-12


def test_leray_dense_oracle():
    disc = single_cell_disc(4, "neumann", (-0.5, 0.0), (0.25, 0.5))
    cell = Cell2D(disc.k_p, (-0.5, 0.0), (0.25, 0.5))

    def u(x):
        return np.stack([x[0], 0 * x[0]])

    got = ppe_rhs_leray(disc, vec_field(disc, u))
    assert relative_gap(got, -cell.weak_divergence(u)) <= ORACLE_TOL


def test_sipg_rhs_zero_data():
    disc = Discretization(build_cartesian_mesh(((0, 1),) * 2, [2, 2], MIXED), 3)
    assert np.all(ppe_rhs_sipg(disc) == 0.0)
    omega = vorticity_projection(disc, disc.velocity.zeros())
    assert np.all(ppe_rhs_sipg(disc, lambda x: 0 * x[0], lambda x: 0 * x, omega, 1.0) == 0.0)


@pytest.mark.parametrize("k_u", [2, 3, 4])
def test_sipg_rhs_dense_oracle(k_u):
    disc = single_cell_disc(k_u, "neumann", (0.0, 0.0), (0.5, 0.5))
    cell = Cell2D(disc.k_p, (0.0, 0.0), (0.5, 0.5))
    got = ppe_rhs_sipg(disc, g_p=lambda x: 1.0 + 0 * x[0])
    assert relative_gap(got, cell.boundary_terms(lambda x: 1.0 + 0 * x[0], ALL_SIDES)) <= ORACLE_TOL


def test_sipg_rhs_curl_curl_term():
    disc = single_cell_disc(3, "dirichlet")
    cell = Cell2D(disc.k_p)
    u = vec_field(disc, lambda x: np.stack([x[1] ** 2, 0 * x[0]]))
    omega = vorticity_projection(disc, u)
    nu = 0.3
    got = ppe_rhs_sipg(disc, omega=omega, nu=nu)
    curlcurl = np.array([-2.0, 0.0])
    expected = np.zeros(cell.n)
    for axis, side, n, phi, grad, x, w in cell.sides():
        expected -= nu * (n @ curlcurl) * np.einsum("ip,p->i", phi, w)
    assert relative_gap(got, expected) <= ORACLE_TOL


def test_sipg_rhs_acceleration_term():
    disc = single_cell_disc(3, "dirichlet", (0.0, 0.0), (0.5, 1.0))
    cell = Cell2D(disc.k_p, (0.0, 0.0), (0.5, 1.0))

    def accel(x):
        return np.stack([x[1], x[0] ** 2])

    got = ppe_rhs_sipg(disc, accel=accel)
    expected = np.zeros(cell.n)
    for axis, side, n, phi, grad, x, w in cell.sides():
        expected -= np.einsum("ip,p,p->i", phi, np.einsum("ap,a->p", accel(x), n), w)
    assert relative_gap(got, expected) <= ORACLE_TOL


# -- vorticity ---------------------------------------------------------------------


def _side_curls(disc, omega):
    return [curl_curl_on_side(disc, omega, side) for side in disc.dirichlet]


def test_vorticity_of_shear():
    disc = Discretization(build_cartesian_mesh(((0, 1),) * 2, [2, 2], "dirichlet"), 3)
    omega = vorticity_projection(disc, vec_field(disc, lambda x: np.stack([x[1], 0 * x[0]])))
    np.testing.assert_allclose(omega.data, -1.0, atol=1e-13)
    for cc in _side_curls(disc, omega):
        assert np.abs(cc).max() <= 1e-12


def test_vorticity_of_gradient_field():
    disc = Discretization(build_cartesian_mesh(((0, 1),) * 2, [2, 2], "dirichlet"), 3)
    omega = vorticity_projection(disc, vec_field(disc, lambda x: np.stack([x[1], x[0]])))
    assert np.abs(omega.data).max() <= 1e-12


def test_vorticity_quadratic_shear():
    disc = Discretization(build_cartesian_mesh(((0, 1),) * 2, [2, 2], "dirichlet"), 3)
    omega = vorticity_projection(disc, vec_field(disc, lambda x: np.stack([-x[1] ** 2, 0 * x[0]])))
    nodes = disc.velocity.node_points
    np.testing.assert_allclose(omega.data[:, 0], 2 * nodes[:, 1], atol=1e-12)
    for cc in _side_curls(disc, omega):
        np.testing.assert_allclose(cc[:, 0], 2.0, atol=1e-11)
        np.testing.assert_allclose(cc[:, 1], 0.0, atol=1e-11)


def test_vorticity_3d_gradient_field():
    mesh = build_cartesian_mesh(((0, 1),) * 3, [2, 2, 2], "dirichlet")
    disc = Discretization(mesh, 2)
    u = disc.velocity.interpolate(lambda x: np.stack([x[1] * x[2], x[0] * x[2], x[0] * x[1]]))
    assert np.abs(vorticity_projection(disc, u).data).max() <= 1e-12
