"""Convergence, stability and Taylor-Green study runners."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..dg import l2_project, relative_l2_error
from ..diagnostics import dissipation_rate, kinetic_energy
from ..mesh import build_cartesian_mesh
from ..problem import ProblemSpec
from ..scheme import SchemeConfig, SchemeError, SplittingScheme
from .energy import DiagnosticsSeries, diagnostics_series

CONVERGENCE_FIELDS = ("parameter", "eps_u", "eps_p", "order_u", "order_p")
TGV_FIELDS = ("t", "E", "eps", "num_diss")


@dataclass
class CaseSetup:
    """One simulation: problem, uniform mesh, degree, scheme and time controls."""

    problem: ProblemSpec
    n_cells: int
    k_u: int
    scheme: SchemeConfig
    end_time: float
    dt: float | None = None
    cfl: float | None = None

    def mesh(self):
        dim = len(self.problem.bounds)
        return build_cartesian_mesh(self.problem.bounds, [self.n_cells] * dim, self.problem.boundary)


@dataclass
class CaseResult:
    eps_u: float
    eps_p: float
    n_steps: int
    dt: float
    wall_time: float
    scheme: SplittingScheme = field(repr=False)
    state: object = field(repr=False)


def pressure_error(scheme: SplittingScheme, p_h, exact_p, t: float) -> float:
    """Relative pressure error; the mean is removed when the pressure level is free."""
    if not scheme.disc.pressure_singular:
        return relative_l2_error(p_h, exact_p, t)
    Q = scheme.disc.pressure
    ref = l2_project(exact_p, Q, t, n_q=Q.degree + 3)
    mean_ref = float(np.sum(Q.apply_mass(ref.data))) / scheme.mesh.measure
    mean_h = float(np.sum(Q.apply_mass(p_h.data))) / scheme.mesh.measure

    def shifted(x, _t):
        return np.asarray(exact_p(x, _t)) - mean_ref

    shifted_h = Q.field(p_h.data - mean_h)
    return relative_l2_error(shifted_h, shifted, t)


def run_case(setup: CaseSetup, log_path=None, callback=None) -> CaseResult:
    """Run one case to its end time and measure the errors against the exact solution."""
    pb = setup.problem
    scheme = SplittingScheme(pb, setup.mesh(), setup.k_u, setup.scheme)
    dt = scheme.time_step(setup.end_time, setup.dt, setup.cfl)
    state = scheme.initial_state(dt)
    start = time.perf_counter()
    scheme.run(state, setup.end_time, log_path=log_path, callback=callback)
    wall = time.perf_counter() - start
    eps_u = eps_p = float("nan")
    if pb.exact is not None:
        eps_u = relative_l2_error(state.velocity, pb.exact.u, state.t)
        eps_p = pressure_error(scheme, state.pressure, pb.exact.p, state.t)
    return CaseResult(eps_u, eps_p, state.step, dt, wall, scheme, state)


@dataclass
class ConvergenceTable:
    kind: str
    parameters: list = field(default_factory=list)
    eps_u: list = field(default_factory=list)
    eps_p: list = field(default_factory=list)

    def _orders(self, eps):
        out = [float("nan")]
        for i in range(1, len(eps)):
            ratio = self.parameters[i - 1] / self.parameters[i]
            if eps[i] <= 0 or eps[i - 1] <= 0 or ratio == 1:
                out.append(float("nan"))
            else:
                out.append(math.log(eps[i - 1] / eps[i]) / math.log(ratio))
        return out

    @property
    def order_u(self) -> list:
        return self._orders(self.eps_u)

    @property
    def order_p(self) -> list:
        return self._orders(self.eps_p)

    def fitted_order(self, which: str = "u") -> float:
        """Least-squares slope of ``log eps`` against ``log parameter``."""
        eps = np.asarray(self.eps_u if which == "u" else self.eps_p)
        par = np.asarray(self.parameters, dtype=float)
        if len(eps) < 2:
            raise ValueError("need at least two rows for a slope")
        return float(np.polyfit(np.log(par), np.log(eps), 1)[0])

    def rows(self) -> list:
        return [
            dict(zip(CONVERGENCE_FIELDS, row))
            for row in zip(self.parameters, self.eps_u, self.eps_p, self.order_u, self.order_p)
        ]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CONVERGENCE_FIELDS)
            for row in self.rows():
                w.writerow([_fmt(row[k]) for k in CONVERGENCE_FIELDS])


class StudyError(RuntimeError):
    """A study row failed; ``table`` holds the rows finished so far."""

    def __init__(self, message, table, cause=None):
        super().__init__(message)
        self.table = table
        self.cause = cause


def convergence_study(kind: str, sweep, base: CaseSetup, log_dir=None) -> ConvergenceTable:
    """Run a time-step (``temporal``) or mesh (``spatial``) refinement sweep.

    For ``temporal`` the sweep lists time steps; for ``spatial`` it lists
    cells per axis, and the tabulated parameter is the cell size.
    """
    if kind not in ("temporal", "spatial"):
        raise ValueError(f"unknown study kind {kind!r}")
    table = ConvergenceTable(kind)
    extent = base.problem.bounds[0][1] - base.problem.bounds[0][0] if base.problem.bounds else 1.0
    for i, value in enumerate(sweep):
        if kind == "temporal":
            setup = replace(base, dt=float(value), cfl=None)
            param = float(value)
        else:
            setup = replace(base, n_cells=int(value))
            param = extent / int(value)
        log_path = None if log_dir is None else f"{log_dir}/{kind}_row{i}.csv"
        try:
            res = run_case(setup, log_path=log_path)
        except SchemeError as exc:
            raise StudyError(f"{kind} study row {i} ({value}) failed: {exc}", table, exc) from exc
        table.parameters.append(param)
        table.eps_u.append(res.eps_u)
        table.eps_p.append(res.eps_p)
    return table


def projection_floor(setup: CaseSetup) -> tuple:
    """Relative L2 errors of the exact fields' projections at the end time.

    A lower bound for the spatial error of any run on this mesh and degree.
    """
    pb = setup.problem
    scheme = SplittingScheme(pb, setup.mesh(), setup.k_u, setup.scheme)
    T = setup.end_time
    u = l2_project(pb.exact.u, scheme.disc.velocity, T)
    p = l2_project(pb.exact.p, scheme.disc.pressure, T)
    return relative_l2_error(u, pb.exact.u, T), pressure_error(scheme, p, pb.exact.p, T)


def temporal_floor(setup: CaseSetup) -> tuple:
    """Richardson estimate of the time-discretization error at ``setup.dt``.

    Runs ``dt`` and ``2 dt`` on the same mesh and scales the difference of
    the results by ``1 / (2**J - 1)``.
    """
    fine = run_case(setup)
    coarse = run_case(replace(setup, dt=2.0 * setup.dt))
    J = setup.scheme.order
    du = _relative_difference(fine.state.velocity, coarse.state.velocity)
    dp = _relative_difference(fine.state.pressure, coarse.state.pressure)
    return du / (2**J - 1), dp / (2**J - 1)


def _relative_difference(a, b) -> float:
    tab = a.space.tables(a.space.degree + 2)
    va, vb = tab.values(a.data), tab.values(b.data)
    num = np.sum(np.sum((va - vb) ** 2, axis=1) * tab.wvol)
    den = np.sum(np.sum(va**2, axis=1) * tab.wvol)
    return float(np.sqrt(num / den)) if den > 0 else float(np.sqrt(num))


@dataclass
class StabilityOutcome:
    mode: str
    cfl: float
    completed: bool
    failed_step: int | None = None
    message: str = ""


def stability_sweep(base: CaseSetup, modes, cfls) -> list:
    """Run each convection mode at each CFL and record completion or divergence."""
    out = []
    for mode in modes:
        conv = replace(base.scheme.convection, mode=mode)
        for cfl in cfls:
            setup = replace(base, scheme=replace(base.scheme, convection=conv), cfl=float(cfl), dt=None)
            try:
                run_case(setup)
                out.append(StabilityOutcome(mode, float(cfl), True))
            except SchemeError as exc:
                out.append(StabilityOutcome(mode, float(cfl), False, exc.step, str(exc)))
    return out


def stability_limit(outcomes, mode: str) -> float:
    """Smallest CFL at which ``mode`` failed (``inf`` when it never failed)."""
    failed = [o.cfl for o in outcomes if o.mode == mode and not o.completed]
    return min(failed) if failed else float("inf")


def run_tgv3d(setup: CaseSetup, sample_every: int = 1, log_path=None) -> DiagnosticsSeries:
    """Taylor-Green run sampling kinetic energy and dissipation every few steps."""
    if sample_every < 1:
        raise ValueError("sample_every must be >= 1")
    pb = setup.problem
    scheme = SplittingScheme(pb, setup.mesh(), setup.k_u, setup.scheme)
    dt = scheme.time_step(setup.end_time, setup.dt, setup.cfl)
    state = scheme.initial_state(dt)
    ts, es, ds = [state.t], [kinetic_energy(state.velocity)], [dissipation_rate(state.velocity, pb.nu)]

    def sample(st):
        if st.step % sample_every == 0:
            ts.append(st.t)
            es.append(kinetic_energy(st.velocity))
            ds.append(dissipation_rate(st.velocity, pb.nu))

    scheme.run(state, setup.end_time, log_path=log_path, callback=sample)
    return diagnostics_series(ts, es, ds)


def write_series_csv(series: DiagnosticsSeries, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TGV_FIELDS)
        for row in zip(series.t, series.energy, series.dissipation, series.numerical):
            w.writerow([_fmt(float(v)) for v in row])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else v


def periodic_problem(dim: int = 2, nu: float = 0.025) -> ProblemSpec:
    """Unforced flow on the periodic unit box, used by the equivalence check."""
    from .exact import tgv2d_velocity

    def u0(x):
        if dim == 2:
            return tgv2d_velocity(x, 0.0, nu)
        return np.zeros((dim,) + np.shape(x)[1:])

    return ProblemSpec(nu=nu, u0=u0, bounds=((-0.5, 0.5),) * dim, boundary="periodic", name=f"periodic{dim}d")


def random_smooth_field(space, rng, n_modes: int = 3):
    """L2 projection of a random trigonometric field with ``n_modes`` wave numbers per axis."""
    dim = space.dim
    lo = np.array([b[0] for b in space.mesh.bounds])
    ext = np.array([b[1] - b[0] for b in space.mesh.bounds])
    waves = rng.integers(-n_modes, n_modes + 1, size=(n_modes, dim))
    amps = rng.normal(size=(n_modes, space.components, 2))

    def fn(x):
        x = np.asarray(x)
        out = np.zeros((space.components,) + x.shape[1:])
        for kvec, amp in zip(waves, amps):
            phase = sum(2 * np.pi * kvec[a] * (x[a] - lo[a]) / ext[a] for a in range(dim))
            shape = (-1,) + (1,) * (x.ndim - 1)
            out += amp[:, 0].reshape(shape) * np.cos(phase) + amp[:, 1].reshape(shape) * np.sin(phase)
        return out

    return l2_project(fn, space)


def equivalence_discrepancy(n_cells: int = 8, k_u: int = 3, order: int = 2, flux: str = "central",
                            seed: int = 0, dt: float = 1e-2) -> float:
    """Consistent versus dual-splitting pressure right-hand side on a periodic box.

    The history is a set of random smooth velocity fields, the convection is
    explicit and the penalty terms are off.
    """
    from ..operators.base import ConvectionConfig, PenaltyConfig
    from ..scheme import SplittingState

    pb = periodic_problem(2)
    mesh = build_cartesian_mesh(pb.bounds, [n_cells, n_cells], pb.boundary)
    cfg = SchemeConfig(order=order, convection=ConvectionConfig(mode="explicit"),
                       penalty=PenaltyConfig(enable_div=False, enable_cont=False))
    scheme = SplittingScheme(pb, mesh, k_u, cfg)
    rng = np.random.default_rng(seed)
    hist = [random_smooth_field(scheme.disc.velocity, rng) for _ in range(order)]
    state = SplittingState(hist, scheme.disc.pressure.zeros(), 0.0, order, float(dt))
    return scheme.dual_splitting_equivalence_check(state, flux=flux)
