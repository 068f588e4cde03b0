import numpy as np
import pytest

from splitdg.mesh import build_cartesian_mesh
from splitdg.operators.base import Discretization, PenaltyConfig


def single_cell_disc(k_u, boundary, lower=(0.0, 0.0), size=(1.0, 1.0), **kw):
    bounds = tuple((lo, lo + h) for lo, h in zip(lower, size))
    mesh = build_cartesian_mesh(bounds, [1, 1], boundary)
    return Discretization(mesh, k_u, **kw)


def dense_matrix(apply, n):
    """Column-by-column assembly of a linear map on R^n."""
    cols = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cols.append(np.asarray(apply(e), dtype=float).reshape(-1))
    return np.array(cols).T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def no_penalty():
    return PenaltyConfig(enable_div=False, enable_cont=False)


# -- acceptance summary ------------------------------------------------------------------

ACCEPTANCE_LINES = []


def record_acceptance(number: int, passed: bool, detail: str):
    """Store and print one PASS/FAIL line for an acceptance criterion."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
