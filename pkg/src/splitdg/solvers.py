"""Matrix-free Krylov solvers and preconditioners.

Operators are plain callables ``y = A(x)`` acting on flat DoF arrays.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """A Krylov solve failed; ``report`` carries the diagnostics."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass
class SolverSettings:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-12
    max_iter: int = 5000
    restart: int = 60
    # residual level, relative to ||b||, below which round-off dominates
    roundoff_floor: float = 1e-14

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("solver tolerances must be positive")
        if self.roundoff_floor < 0:
            raise ValueError("roundoff_floor must be non-negative")
        if self.restart < 1:
            raise ValueError("GMRES restart length must be >= 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual: float
    initial_residual: float
    criterion: str  # rel | abs | floor | maxit | breakdown | stagnation
    history: list = field(default_factory=list, repr=False)


def _target(r0, settings, bnorm=0.0):
    """Stopping level: ``max(rel * r0, abs)``, never below the round-off floor."""
    return max(settings.rel_tol * r0, settings.abs_tol, settings.roundoff_floor * bnorm)


def _criterion(res, r0, settings, bnorm=0.0):
    if res <= settings.abs_tol:
        return "abs"
    if res <= settings.rel_tol * r0:
        return "rel"
    return "floor"


def cg_solve(A, b, M=None, settings=None, nullspace=None, x0=None):
    """Preconditioned conjugate gradients.

    ``nullspace`` is an optional ``(project_rhs, project_iterate)`` pair:
    the first makes ``b`` consistent with a singular operator, the second
    removes the null component from search directions and the result.
    """
    settings = settings or SolverSettings()
    b = np.asarray(b, dtype=float)
    if nullspace is not None:
        proj_rhs, proj_it = nullspace
        b = proj_rhs(b)
    else:
        proj_it = None
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if proj_it is not None:
        x = proj_it(x)
    r = b - A(x) if x0 is not None else b.copy()
    r0 = float(np.linalg.norm(r))
    bnorm = float(np.linalg.norm(b))
    target = _target(r0, settings, bnorm)
    hist = [r0]
    if r0 <= target:
        return x, SolveReport(True, 0, r0, r0, _criterion(r0, r0, settings, bnorm), hist)
    z = M(r) if M is not None else r.copy()
    if proj_it is not None:
        z = proj_it(z)
    p = z.copy()
    rz = float(r @ z)
    res = r0
    for it in range(1, settings.max_iter + 1):
        Ap = A(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp):
            raise SolverError(f"CG: non-finite value at iteration {it}")
        if pAp <= 0.0:
            return x, SolveReport(False, it, res, r0, "breakdown", hist)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r))
        hist.append(res)
        if not np.isfinite(res):
            raise SolverError(f"CG: residual became NaN at iteration {it}")
        if res <= target:
            true_res = float(np.linalg.norm(b - A(x)))
            if proj_it is not None:
                x = proj_it(x)
            return x, SolveReport(True, it, true_res, r0, _criterion(res, r0, settings, bnorm), hist)
        z = M(r) if M is not None else r.copy()
        if proj_it is not None:
            z = proj_it(z)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    if proj_it is not None:
        x = proj_it(x)
    return x, SolveReport(False, settings.max_iter, res, r0, "maxit", hist)


def gmres_solve(A, b, M=None, settings=None, x0=None):
    """Restarted GMRES with right preconditioning (true residual is minimized)."""
    settings = settings or SolverSettings()
    b = np.asarray(b, dtype=float)
    n = b.size
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A(x) if x0 is not None else b.copy()
    r0 = float(np.linalg.norm(r))
    bnorm = float(np.linalg.norm(b))
    target = _target(r0, settings, bnorm)
    hist = [r0]
    if r0 <= target:
        return x, SolveReport(True, 0, r0, r0, _criterion(r0, r0, settings, bnorm), hist)
    prec = M if M is not None else (lambda v: v)
    total = 0
    beta = r0
    m = settings.restart
    while total < settings.max_iter:
        cycle_start = beta
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        res = beta
        for j in range(m):
            Z[j] = prec(V[j])
            w = A(Z[j])
            # modified Gram-Schmidt
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w = w - H[i, j] * V[i]
            hnext = float(np.linalg.norm(w))
            H[j + 1, j] = hnext
            if not np.isfinite(hnext):
                raise SolverError(f"GMRES: non-finite Krylov vector at iteration {total + j + 1}")
            if hnext > 0.0:
                V[j + 1] = w / hnext
            for i in range(j):
                tmp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = tmp
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j] = H[j, j] / denom if denom > 0 else 1.0
            sn[j] = H[j + 1, j] / denom if denom > 0 else 0.0
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            res = abs(g[j + 1])
            hist.append(res)
            j_done = j + 1
            # hnext == 0: the Krylov space is invariant and the solution exact
            if res <= target or hnext == 0.0 or total + j_done >= settings.max_iter:
                break
        y = np.linalg.solve(np.triu(H[:j_done, :j_done]), g[:j_done]) if j_done else np.zeros(0)
        x = x + Z[:j_done].T @ y
        total += j_done
        r = b - A(x)
        beta = float(np.linalg.norm(r))
        if not np.isfinite(beta):
            raise SolverError(f"GMRES: residual became NaN after {total} iterations")
        if beta <= target:
            return x, SolveReport(True, total, beta, r0, _criterion(beta, r0, settings, bnorm), hist)
        if beta >= cycle_start * (1.0 - 1e-12):
            return x, SolveReport(False, total, beta, r0, "stagnation", hist)
    return x, SolveReport(False, total, beta, r0, "maxit", hist)


# -- preconditioners -------------------------------------------------------

def distance2_coloring(mesh) -> np.ndarray:
    """Greedy cell coloring where cells sharing a face neighbor differ in color."""
    n = mesh.num_cells
    nbrs = [set() for _ in range(n)]
    for af in mesh.axis_faces:
        for o, nb in zip(af.owner, af.neighbor):
            nbrs[o].add(int(nb))
            nbrs[nb].add(int(o))
    colors = np.full(n, -1, dtype=int)
    for c in range(n):
        taken = set()
        for d in nbrs[c]:
            taken.add(colors[d])
            for e in nbrs[d]:
                taken.add(colors[e])
        col = 0
        while col in taken:
            col += 1
        colors[c] = col
    return colors


def _probe_vectors(mesh, dofs_per_cell):
    """Yield (color cells, local dof, probe vector) for colored probing."""
    colors = distance2_coloring(mesh)
    ncell = mesh.num_cells
    for col in range(colors.max() + 1):
        cells = np.flatnonzero(colors == col)
        for l in range(dofs_per_cell):
            x = np.zeros((ncell, dofs_per_cell))
            x[cells, l] = 1.0
            yield cells, l, x.reshape(-1)


def operator_diagonal(A, mesh, dofs_per_cell) -> np.ndarray:
    """Diagonal of a cell-block operator from colored probes."""
    ncell = mesh.num_cells
    diag = np.zeros((ncell, dofs_per_cell))
    for cells, l, x in _probe_vectors(mesh, dofs_per_cell):
        y = A(x).reshape(ncell, dofs_per_cell)
        diag[cells, l] = y[cells, l]
    return diag.reshape(-1)


def assemble_by_probing(A, mesh, dofs_per_cell) -> sp.csr_matrix:
    """Sparse matrix of a face-coupled cell-block operator.

    Distance-2 coloring keeps every probe's response on a cell and its face
    neighbors free of overlap, so each column is read off exactly.
    """
    ncell = mesh.num_cells
    nbrs = [[c] for c in range(ncell)]
    for af in mesh.axis_faces:
        for o, nb in zip(af.owner, af.neighbor):
            if nb != o:
                nbrs[o].append(int(nb))
                nbrs[nb].append(int(o))
    rows, cols, vals = [], [], []
    local = np.arange(dofs_per_cell)
    for cells, l, x in _probe_vectors(mesh, dofs_per_cell):
        y = A(x).reshape(ncell, dofs_per_cell)
        for c in cells:
            col = c * dofs_per_cell + l
            for d in set(nbrs[c]):
                blk = y[d]
                nz = np.flatnonzero(blk)
                rows.append(d * dofs_per_cell + local[nz])
                cols.append(np.full(len(nz), col))
                vals.append(blk[nz])
    n = ncell * dofs_per_cell
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


class JacobiPreconditioner:
    """``z = r / diag(A)``; non-positive diagonal entries are replaced by 1."""

    def __init__(self, diagonal):
        diag = np.array(diagonal, dtype=float)
        bad = ~(diag > 0.0)
        self.n_replaced = int(bad.sum())
        if self.n_replaced:
            log.warning("Jacobi: %d non-positive diagonal entries replaced by 1", self.n_replaced)
        diag[bad] = 1.0
        self.inv_diag = 1.0 / diag

    def __call__(self, r):
        return r * self.inv_diag


def jacobi_preconditioner(A=None, mesh=None, dofs_per_cell=None, diagonal=None) -> JacobiPreconditioner:
    """Jacobi preconditioner from an explicit diagonal or by probing ``A``."""
    if diagonal is None:
        if A is None or mesh is None or dofs_per_cell is None:
            raise ValueError("pass either a diagonal or (A, mesh, dofs_per_cell) for probing")
        diagonal = operator_diagonal(A, mesh, dofs_per_cell)
    return JacobiPreconditioner(diagonal)


class InverseMassPreconditioner:
    """Exact block-diagonal inverse of the cell mass matrices."""

    def __init__(self, space):
        self.space = space

    def __call__(self, r):
        return self.space.apply_mass_inverse(r).reshape(-1)


def inverse_mass_preconditioner(space) -> InverseMassPreconditioner:
    return InverseMassPreconditioner(space)


class SparseLUPreconditioner:
    """Factorization of a probed operator, applied as a preconditioner.

    A tiny diagonal shift keeps singular (pure Neumann) operators
    factorizable; the solver's null-space projection removes the
    constant mode this lets through.
    """

    def __init__(self, matrix, shift=0.0):
        matrix = sp.csc_matrix(matrix)
        if shift:
            matrix = matrix + shift * sp.identity(matrix.shape[0], format="csc")
        self.lu = spla.splu(matrix)

    def __call__(self, r):
        return self.lu.solve(np.asarray(r, dtype=float))


def project_out_constants(x, space) -> np.ndarray:
    """Subtract the L2 mean so that the integral of the field vanishes."""
    if space.components != 1:
        raise ValueError("constant-mode projection is defined for scalar spaces")
    x = np.asarray(x, dtype=float).reshape(-1)
    integral = float(np.sum(space.apply_mass(x)))
    return x - integral / space.mesh.measure


def mean_free_rhs(b) -> np.ndarray:
    """Remove the Euclidean component along the nodal constant vector."""
    b = np.asarray(b, dtype=float)
    return b - b.mean()


def constant_nullspace(space):
    """Null-space pair for :func:`cg_solve` on a pure-Neumann scalar problem."""
    return mean_free_rhs, (lambda v: project_out_constants(v, space))
