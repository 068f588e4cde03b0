from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splitdg.dg import FunctionSpace
from splitdg.mesh import build_cartesian_mesh
from splitdg.time_integration import (
    EPS_VELOCITY_FLOOR,
    TimeControls,
    bdf_coefficients,
    boundary_time_derivative,
    compute_cfl_time_step,
    default_extrapolation_orders,
    extrapolation_coefficients,
    startup_sequence,
)


@pytest.mark.parametrize(
    "J, gamma0, alpha",
    [(1, 1, [1]), (2, Fraction(3, 2), [2, Fraction(-1, 2)]), (3, Fraction(11, 6), [3, Fraction(-3, 2), Fraction(1, 3)])],
)
def test_bdf_table(J, gamma0, alpha):
    s = bdf_coefficients(J)
    assert s.gamma0 == pytest.approx(float(gamma0), abs=1e-15)
    np.testing.assert_allclose(s.alpha, [float(a) for a in alpha], atol=1e-15)


@pytest.mark.parametrize("m, beta", [(1, [1]), (2, [2, -1]), (3, [3, -3, 1])])
def test_extrapolation_table(m, beta):
    np.testing.assert_allclose(extrapolation_coefficients(m), beta, atol=1e-15)


@pytest.mark.parametrize("J", [1, 2, 3, 4])
def test_bdf_order_conditions(J):
    s = bdf_coefficients(J)
    assert s.gamma0 == pytest.approx(sum(s.alpha), abs=1e-14)
    for q in range(J + 1):
        lhs = s.gamma0 - sum(a * (1.0 - i) ** q for i, a in enumerate(s.alpha, start=1))
        assert abs(lhs - q) <= 1e-14


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_extrapolation_order_conditions(m):
    beta = extrapolation_coefficients(m)
    assert sum(beta) == pytest.approx(1.0, abs=1e-14)
    for q in range(m):
        assert abs(sum(b * (1.0 - i) ** q for i, b in enumerate(beta, start=1)) - 1.0) <= 1e-14


@pytest.mark.parametrize("bad", [0, 5, -1])
def test_order_range(bad):
    with pytest.raises(ValueError):
        bdf_coefficients(bad)
    with pytest.raises(ValueError):
        extrapolation_coefficients(bad)


def test_default_knobs():
    assert default_extrapolation_orders(2) == (2, 2)
    assert default_extrapolation_orders(4) == (3, 3)


def _scalar_ode_error(J, n, lam=-1.0, T=1.0):
    """Fully implicit BDF-J for y' = lam y with exact starting values."""
    dt = T / n
    s = bdf_coefficients(J)
    hist = [np.exp(lam * (-i * dt)) for i in range(J)]  # newest first at t = 0
    t = 0.0
    for _ in range(n):
        rhs = sum(a * y for a, y in zip(s.alpha, hist)) / dt
        y_new = rhs / (s.gamma0 / dt - lam)
        hist = [y_new] + hist[:-1]
        t += dt
    return abs(hist[0] - np.exp(lam * T))


@pytest.mark.parametrize("J", [1, 2, 3, 4])
def test_scalar_ode_orders(J):
    ns = [20, 40, 80, 160]
    errs = [_scalar_ode_error(J, n) for n in ns]
    slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert abs(slope - J) <= 0.1, (J, slope, errs)


def _imex_error(J, n, T=1.0):
    """y' = -y + sin(y) with the nonlinear part extrapolated (order J)."""
    dt = T / n
    s = bdf_coefficients(J)
    beta = extrapolation_coefficients(J)
    fine = _reference_solution(T)
    hist = [_reference_solution(-i * dt) for i in range(J)]
    for _ in range(n):
        ext = sum(b * np.sin(y) for b, y in zip(beta, hist))
        rhs = sum(a * y for a, y in zip(s.alpha, hist)) / dt + ext
        hist = [rhs / (s.gamma0 / dt + 1.0)] + hist[:-1]
    return abs(hist[0] - fine)


def _reference_solution(t, y0=1.0, steps=20000):
    """Classical RK4 reference for y' = -y + sin(y), forwards or backwards."""
    h = t / steps
    y = y0
    f = lambda v: -v + np.sin(v)  # noqa: E731
    for _ in range(steps):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


@pytest.mark.parametrize("J", [1, 2, 3])
def test_imex_scalar_orders(J):
    ns = [20, 40, 80]
    errs = [_imex_error(J, n) for n in ns]
    slope = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert abs(slope - J) <= 0.1, (J, slope)


def test_cfl_formula():
    mesh = build_cartesian_mesh(((0, 1),) * 2, [10, 10], "periodic")
    V = FunctionSpace(mesh, 1, 2)
    u = V.interpolate(lambda x: np.stack([1 + 0 * x[0], 0 * x[0]]))
    assert compute_cfl_time_step(mesh, u, 1, 0.4) == pytest.approx(0.04, rel=1e-14)
    ratio = compute_cfl_time_step(mesh, u, 1, 0.4) / compute_cfl_time_step(mesh, u, 4, 0.4)
    assert ratio == pytest.approx(8.0, rel=1e-14)


def test_cfl_zero_velocity_is_finite():
    mesh = build_cartesian_mesh(((0, 1),) * 2, [10, 10], "periodic")
    dt = compute_cfl_time_step(mesh, FunctionSpace(mesh, 2, 2).zeros(), 2, 0.4)
    assert np.isfinite(dt)
    assert dt == pytest.approx(0.4 * 0.1 / (2**1.5 * EPS_VELOCITY_FLOOR))


def test_boundary_derivative_examples():
    dt = 0.1
    assert np.allclose(boundary_time_derivative([np.full(3, 2.0)] * 2, 1, dt), 0.0, atol=1e-12)
    t1 = 0.7
    lin = [np.array([t1 - i * dt]) for i in range(2)]
    assert boundary_time_derivative(lin, 1, dt)[0] == pytest.approx(1.0, abs=1e-12)
    quad = [np.array([(t1 - i * dt) ** 2]) for i in range(3)]
    assert boundary_time_derivative(quad, 2, dt)[0] == pytest.approx(2 * t1, abs=1e-12)
    with pytest.raises(ValueError):
        boundary_time_derivative(quad[:2], 2, dt)


@settings(max_examples=40, deadline=None)
@given(J=st.integers(1, 4), coeffs=st.lists(st.floats(-3, 3), min_size=5, max_size=5),
       t1=st.floats(-2, 2), dt=st.floats(0.01, 0.5))
def test_boundary_derivative_polynomial_exactness(J, coeffs, t1, dt):
    c = np.array(coeffs[: J + 1])
    q = np.polynomial.Polynomial(c)
    hist = [np.array([q(t1 - i * dt)]) for i in range(J + 1)]
    got = boundary_time_derivative(hist, J, dt)[0]
    scale = 1.0 + np.abs(c).sum() * (1 + abs(t1) + (J + 1) * dt) ** J / dt
    assert abs(got - q.deriv()(t1)) <= 1e-12 * scale


def test_startup_sequences():
    assert startup_sequence(1, "increasing_order") == []
    seq = startup_sequence(3, "increasing_order")
    assert [s.order for s in seq] == [1, 2]
    assert startup_sequence(3, "exact_interpolation", exact=object()) == []
    with pytest.raises(ValueError):
        startup_sequence(3, "exact_interpolation")


def test_time_controls_validation():
    assert TimeControls(1.0, dt=0.1).n_steps(0.1) == 10
    with pytest.raises(ValueError):
        TimeControls(1.0)
    with pytest.raises(ValueError):
        TimeControls(1.0, dt=-1.0)
