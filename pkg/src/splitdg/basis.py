"""1D quadrature rules and nodal Lagrange bases."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre rule on [-1, 1] with ``n_q`` points."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def n_q(self) -> int:
        return len(self.points)


def gauss_legendre(n: int) -> QuadratureRule:
    """Return the ``n``-point Gauss-Legendre rule (exact up to degree 2n-1)."""
    if n < 1:
        raise ValueError(f"quadrature needs at least one point, got n={n}")
    x, w = legendre.leggauss(n)
    return QuadratureRule(points=x, weights=w)


def gauss_lobatto_points(n: int) -> np.ndarray:
    """Return the ``n`` Gauss-Lobatto points on [-1, 1] (endpoints included)."""
    if n < 2:
        raise ValueError(f"Gauss-Lobatto needs at least two points, got n={n}")
    if n == 2:
        return np.array([-1.0, 1.0])
    # interior points are the roots of P'_{n-1}
    coef = np.zeros(n)
    coef[-1] = 1.0
    interior = legendre.legroots(legendre.legder(coef))
    return np.concatenate(([-1.0], np.sort(interior.real), [1.0]))


@dataclass(frozen=True)
class LagrangeBasis:
    """Lagrange polynomials through ``nodes``.

    ``values(x)[i, j]`` is the j-th shape function at ``x[i]``; ``derivatives``
    follows the same layout.
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) == 0:
            raise ValueError("nodes must be a non-empty 1D array")
        if len(np.unique(nodes)) != len(nodes):
            raise ValueError("Lagrange nodes must be distinct")
        object.__setattr__(self, "nodes", nodes)
        diff = nodes[:, None] - nodes[None, :]
        np.fill_diagonal(diff, 1.0)
        object.__setattr__(self, "_bary", 1.0 / np.prod(diff, axis=1))

    @property
    def degree(self) -> int:
        return len(self.nodes) - 1

    def values(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        nodes = self.nodes
        n = len(nodes)
        out = np.empty((len(x), n))
        for j in range(n):
            others = np.delete(np.arange(n), j)
            out[:, j] = np.prod(x[:, None] - nodes[others][None, :], axis=1) * self._bary[j]
        return out

    def derivatives(self, x) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        nodes = self.nodes
        n = len(nodes)
        out = np.zeros((len(x), n))
        for j in range(n):
            others = [m for m in range(n) if m != j]
            for skip in others:
                rest = [m for m in others if m != skip]
                term = np.ones(len(x))
                for m in rest:
                    term = term * (x - nodes[m])
                out[:, j] += term
            out[:, j] *= self._bary[j]
        return out


def lagrange_basis(degree: int, nodes=None) -> LagrangeBasis:
    """Lagrange basis of ``degree``; Gauss-Lobatto nodes unless given."""
    if nodes is None:
        nodes = gauss_lobatto_points(degree + 1)
    nodes = np.asarray(nodes, dtype=float)
    if len(nodes) != degree + 1:
        raise ValueError(f"degree {degree} needs {degree + 1} nodes, got {len(nodes)}")
    return LagrangeBasis(nodes)
