import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splitdg import _kernels
from splitdg.basis import gauss_legendre, gauss_lobatto_points, lagrange_basis
from splitdg.dg import (
    FunctionSpace,
    ZeroNormError,
    divergence_l2_norm,
    evaluate_field,
    integrate_field,
    l2_project,
    relative_l2_error,
)
from splitdg.mesh import build_cartesian_mesh


def unit_mesh(n=2, dim=2, boundary="dirichlet"):
    return build_cartesian_mesh(((0, 1),) * dim, [n] * dim, boundary)


# -- quadrature and basis ----------------------------------------------------------


def test_gauss_legendre_small_rules():
    r1 = gauss_legendre(1)
    np.testing.assert_allclose(r1.points, [0.0], atol=1e-15)
    np.testing.assert_allclose(r1.weights, [2.0], rtol=1e-15)
    r2 = gauss_legendre(2)
    np.testing.assert_allclose(r2.points, [-1 / np.sqrt(3), 1 / np.sqrt(3)], rtol=1e-15)
    np.testing.assert_allclose(r2.weights, [1.0, 1.0], rtol=1e-15)
    r3 = gauss_legendre(3)
    np.testing.assert_allclose(r3.points, [-np.sqrt(0.6), 0.0, np.sqrt(0.6)], atol=1e-15)
    np.testing.assert_allclose(r3.weights, [5 / 9, 8 / 9, 5 / 9], rtol=1e-14)


@pytest.mark.parametrize("n", range(1, 9))
def test_gauss_legendre_exactness(n):
    rule = gauss_legendre(n)
    for m in range(2 * n):
        exact = 0.0 if m % 2 else 2.0 / (m + 1)
        assert rule.weights @ rule.points**m == pytest.approx(exact, abs=1e-14)


def test_linear_lagrange():
    b = lagrange_basis(1, nodes=[-1.0, 1.0])
    np.testing.assert_allclose(b.values(np.array([0.0])), [[0.5, 0.5]], rtol=1e-15)
    np.testing.assert_allclose(b.derivatives(np.array([-0.3, 0.7])), [[-0.5, 0.5]] * 2, rtol=1e-14)


def test_quadratic_lobatto_cardinal():
    b = lagrange_basis(2)
    np.testing.assert_allclose(b.nodes, [-1.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(b.values(np.array([1.0])), [[0.0, 0.0, 1.0]], atol=1e-15)


@pytest.mark.parametrize("k", range(1, 8))
def test_lagrange_partition_of_unity(k):
    b = lagrange_basis(k)
    x = np.linspace(-1, 1, 17)
    np.testing.assert_allclose(b.values(x).sum(axis=1), 1.0, atol=1e-13)
    np.testing.assert_allclose(b.derivatives(x).sum(axis=1), 0.0, atol=1e-11)
    np.testing.assert_allclose(b.values(b.nodes), np.eye(k + 1), atol=1e-13)


def test_lobatto_points_symmetric():
    for n in range(2, 9):
        x = gauss_lobatto_points(n)
        np.testing.assert_allclose(x, -x[::-1], atol=1e-15)


def test_duplicate_nodes_rejected():
    with pytest.raises(ValueError):
        lagrange_basis(2, nodes=[0.0, 0.0, 1.0])


# -- fields ----------------------------------------------------------------------


def test_evaluate_constant():
    V = FunctionSpace(unit_mesh(), 3, 2)
    u = V.interpolate(lambda x: np.stack([3.0 + 0 * x[0], -2.0 + 0 * x[0]]))
    pts = np.random.default_rng(0).uniform(-1, 1, size=(10, 2))
    vals, grads = evaluate_field(u, 3, pts, gradient=True)
    np.testing.assert_allclose(vals, [[3.0, -2.0]] * 10, rtol=1e-14)
    np.testing.assert_allclose(grads, 0.0, atol=1e-12)


def test_evaluate_affine_gradient():
    mesh = build_cartesian_mesh(((0, 0.5),) * 2, [1, 1], "dirichlet")
    Q = FunctionSpace(mesh, 1)
    p = Q.interpolate(lambda x: x[0])
    _, g = evaluate_field(p, 0, [[0.1, -0.4], [0.9, 0.9]], gradient=True)
    np.testing.assert_allclose(g[:, 0], [[1.0, 0.0]] * 2, atol=1e-14)


@pytest.mark.parametrize("k", [2, 3, 4])
def test_evaluate_bilinear_exact(k):
    mesh = unit_mesh(3)
    Q = FunctionSpace(mesh, k)
    p = Q.interpolate(lambda x: x[0] * x[1])
    ref = np.random.default_rng(k).uniform(-1, 1, size=(12, 2))
    cell = 4
    lo = mesh.cell(cell).lower
    phys = lo + 0.5 * (ref + 1) * mesh.cell_size
    vals = evaluate_field(p, cell, ref)
    np.testing.assert_allclose(vals[:, 0], phys[:, 0] * phys[:, 1], atol=1e-14)


@pytest.mark.parametrize("k", [1, 2, 4])
def test_projection_reproduces_polynomials(k):
    V = FunctionSpace(unit_mesh(2), k, 2)

    def poly(x):
        return np.stack([x[0] ** k - 2 * x[1], x[0] * x[1] ** (k - 1) + 1])

    np.testing.assert_allclose(l2_project(poly, V).data, V.interpolate(poly).data, atol=1e-13)


def test_projection_of_zero():
    Q = FunctionSpace(unit_mesh(2), 2)
    assert np.all(l2_project(lambda x: 0 * x[0], Q).data == 0.0)


def test_projection_convergence_rate():
    errs = []
    for n in (4, 8, 16):
        Q = FunctionSpace(unit_mesh(n), 2)
        f = lambda x: np.sin(2 * np.pi * x[0])  # noqa: E731
        errs.append(relative_l2_error(l2_project(f, Q), f))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    np.testing.assert_allclose(rates, 3.0, atol=0.15)


def test_relative_error_cases():
    Q = FunctionSpace(unit_mesh(2), 3)
    poly = lambda x: x[0] ** 3 - x[1]  # noqa: E731
    assert relative_l2_error(Q.interpolate(poly), poly) <= 1e-12
    assert relative_l2_error(Q.zeros(), lambda x: np.cos(x[0])) == pytest.approx(1.0, rel=1e-14)
    scaled = Q.field(Q.interpolate(poly).data * (1 + 1e-3))
    assert abs(relative_l2_error(scaled, poly) - 1e-3) <= 1e-9


def test_relative_error_zero_reference():
    Q = FunctionSpace(unit_mesh(2), 2)
    with pytest.raises(ZeroNormError):
        relative_l2_error(Q.zeros(), lambda x: 0 * x[0])
    assert relative_l2_error(Q.zeros(), lambda x: 0 * x[0], relative=False) == 0.0


def test_divergence_norm_examples():
    V = FunctionSpace(unit_mesh(3), 2, 2)
    assert divergence_l2_norm(V.interpolate(lambda x: np.stack([x[0], -x[1]]))) <= 1e-13
    assert divergence_l2_norm(V.interpolate(lambda x: np.stack([x[0], 0 * x[0]]))) == pytest.approx(1.0, rel=1e-13)
    assert divergence_l2_norm(V.interpolate(lambda x: np.stack([1 + 0 * x[0], 2 + 0 * x[0]]))) <= 1e-13


def test_integrate_field():
    mesh = build_cartesian_mesh(((0, 1), (0, 2)), [3, 2], "periodic")
    V = FunctionSpace(mesh, 3, 2)
    u = V.interpolate(lambda x: np.stack([x[0] ** 2, 1 + 0 * x[0]]))
    np.testing.assert_allclose(integrate_field(u), [2 / 3, 2.0], rtol=1e-13)


@pytest.mark.parametrize("k", [2, 3])
def test_mass_inverse_roundtrip(k, rng):
    V = FunctionSpace(unit_mesh(2, dim=3), k, 3)
    x = rng.normal(size=V.shape)
    np.testing.assert_allclose(V.apply_mass_inverse(V.apply_mass(x)), x, atol=1e-11)


# -- kernels -----------------------------------------------------------------------


@settings(max_examples=25, deadline=None)
@given(
    dim=st.sampled_from([2, 3]),
    n=st.integers(2, 5),
    m=st.integers(1, 6),
    batch=st.integers(1, 4),
    seed=st.integers(0, 2**16),
)
def test_backends_agree(dim, n, m, batch, seed):
    r = np.random.default_rng(seed)
    data = r.normal(size=(batch,) + (n,) * dim)
    mats = [r.normal(size=(m, n)) for _ in range(dim)]
    a = _kernels.tensor_apply(data, mats, backend="numpy")
    b = _kernels.tensor_apply(data, mats, backend=_kernels.BACKEND)
    ref = data
    for ax, M in enumerate(mats):
        ref = np.moveaxis(np.tensordot(M, ref, axes=([1], [ax + 1])), 0, ax + 1)
    np.testing.assert_allclose(a, ref, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(b, ref, rtol=1e-12, atol=1e-12)
