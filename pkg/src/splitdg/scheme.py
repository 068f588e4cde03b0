"""Consistent splitting time stepper: pressure step, extrapolation, momentum step.

The stored pressure is always the modified pressure; the Leray potential
never appears as a separate variable.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dg import DGField, FunctionSpace, call_data, divergence_l2_norm, l2_project, sample
from .diagnostics import kinetic_energy
from .mesh import Mesh
from .operators import momentum as mom
from .operators import pressure as ppe
from .operators.base import ConvectionConfig, Discretization, PenaltyConfig, scatter_interior, sipg_apply
from .problem import ProblemSpec
from .solvers import (
    SolverError,
    SolverSettings,
    SparseLUPreconditioner,
    assemble_by_probing,
    cg_solve,
    constant_nullspace,
    gmres_solve,
    inverse_mass_preconditioner,
    jacobi_preconditioner,
)
from .time_integration import (
    STARTUP_POLICIES,
    bdf_coefficients,
    compute_cfl_time_step,
    default_extrapolation_orders,
    extrapolation_coefficients,
)

log = logging.getLogger(__name__)

PPE_PRECONDITIONERS = ("jacobi", "sparse_lu", "none")
MOMENTUM_PRECONDITIONERS = ("inverse_mass", "mass_viscous_lu")
STEP_LOG_FIELDS = ("step", "t", "dt", "order", "ppe_iterations", "momentum_iterations",
                   "divergence_l2", "kinetic_energy")


class SchemeError(RuntimeError):
    """A time step failed; carries the step index, time and solver report."""

    def __init__(self, message, step=None, t=None, report=None):
        super().__init__(message)
        self.step = step
        self.t = t
        self.report = report


@dataclass
class SchemeConfig:
    """Order knobs, convection treatment, penalties and solver settings.

    ``j_c`` and ``j_p`` default to ``order`` up to BDF-2 and ``order - 1``
    beyond.  ``startup="auto"`` picks exact interpolation whenever the
    problem carries an exact solution.
    """

    order: int = 2
    j_c: int | None = None
    j_p: int | None = None
    leray: bool = True
    convection: ConvectionConfig = field(default_factory=ConvectionConfig)
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    pressure_solver: SolverSettings = field(default_factory=SolverSettings)
    momentum_solver: SolverSettings = field(default_factory=SolverSettings)
    ppe_preconditioner: str = "jacobi"
    momentum_preconditioner: str = "inverse_mass"
    overintegration: int = 1
    startup: str = "auto"
    blowup_factor: float = 1e3

    def __post_init__(self):
        jc, jp = default_extrapolation_orders(self.order)
        if self.j_c is None:
            self.j_c = jc
        if self.j_p is None:
            self.j_p = jp
        for name in ("j_c", "j_p"):
            val = getattr(self, name)
            if not 1 <= val <= self.order:
                raise ValueError(f"{name} must lie in 1..order={self.order}, got {val}")
        if self.ppe_preconditioner not in PPE_PRECONDITIONERS:
            raise ValueError(f"unknown PPE preconditioner {self.ppe_preconditioner!r}")
        if self.momentum_preconditioner not in MOMENTUM_PRECONDITIONERS:
            raise ValueError(f"unknown momentum preconditioner {self.momentum_preconditioner!r}")
        if self.startup not in STARTUP_POLICIES + ("auto",):
            raise ValueError(f"unknown startup policy {self.startup!r}")
        if self.overintegration < 0:
            raise ValueError("overintegration must be >= 0")


@dataclass
class SplittingState:
    """Velocity history (newest first), modified pressure, time and step size."""

    history: list
    pressure: DGField
    t: float
    step: int
    dt: float
    last: dict = field(default_factory=dict)

    @property
    def velocity(self) -> DGField:
        return self.history[0]


@dataclass(frozen=True)
class ActiveOrders:
    order: int
    j_c: int
    j_p: int


def _combine(fields, weights):
    acc = np.zeros_like(fields[0].data)
    for w, f in zip(weights, fields):
        acc += w * f.data
    return acc


class SplittingScheme:
    """Time stepper bound to one problem, mesh, degree and configuration.

    Parameters
    ----------
    problem : ProblemSpec
    mesh : Mesh
    k_u : int
        Velocity degree; the pressure degree is ``k_u - 1``.
    config : SchemeConfig
    """

    def __init__(self, problem: ProblemSpec, mesh: Mesh, k_u: int, config: SchemeConfig | None = None):
        self.problem = problem
        self.config = config or SchemeConfig()
        self.disc = Discretization(mesh, k_u, self.config.penalty, self.config.convection,
                                   self.config.overintegration)
        self._ppe_precond = None
        self._mass_precond = inverse_mass_preconditioner(self.disc.velocity)
        self._momentum_lu = {}
        self._check_traction_split()

    @property
    def mesh(self) -> Mesh:
        return self.disc.mesh

    def _check_traction_split(self):
        pb = self.problem
        if pb.h is None or pb.h_u is None or pb.g_p is None:
            return
        tab = self.disc.velocity.tables(self.disc.nq_lin)
        for side in self.disc.neumann:
            pts = np.moveaxis(tab.face_points(side.cells, side.axis, side.side), 1, 0)
            normal = np.zeros(self.disc.dim)
            normal[side.axis] = side.normal_sign
            res = pb.traction_split_residual(pts, normal, 0.0)
            if res > 1e-10:
                raise ValueError(f"traction data violate h = h_u - g_p n (residual {res:.3e})")

    # -- setup -------------------------------------------------------------

    def startup_policy(self) -> str:
        policy = self.config.startup
        if policy == "auto":
            return "exact_interpolation" if self.problem.exact is not None else "increasing_order"
        return policy

    def time_step(self, end_time: float, dt: float | None = None, cfl: float | None = None) -> float:
        """Uniform step: ``dt`` as given, or the CFL step from ``u0`` shrunk to divide ``end_time``."""
        if dt is not None:
            if dt <= 0:
                raise ValueError("dt must be positive")
            return float(dt)
        if cfl is None:
            raise ValueError("give either dt or cfl")
        u0 = l2_project(self.problem.u0, self.disc.velocity)
        raw = compute_cfl_time_step(self.mesh, u0, self.disc.k_u, cfl)
        return end_time / math.ceil(end_time / raw - 1e-9)

    def initial_state(self, dt: float, t0: float = 0.0) -> SplittingState:
        """History and pressure at ``t0`` following the startup policy."""
        V, Q = self.disc.velocity, self.disc.pressure
        pb = self.problem
        if self.startup_policy() == "exact_interpolation":
            if pb.exact is None:
                raise ValueError("exact_interpolation startup needs an exact solution")
            hist = [l2_project(pb.exact.u, V, t0 - i * dt) for i in range(self.config.order)]
            pressure = l2_project(pb.exact.p, Q, t0)
        else:
            hist = [l2_project(pb.u0, V)]
            pressure = l2_project(pb.p0, Q) if pb.p0 is not None else Q.zeros()
        return SplittingState(hist, pressure, float(t0), 0, float(dt))

    def active_orders(self, state: SplittingState) -> ActiveOrders:
        """Full orders once the history is long enough; ramp steps use one order for all knobs."""
        J = self.config.order
        avail = len(state.history)
        if avail >= J:
            return ActiveOrders(J, self.config.j_c, self.config.j_p)
        return ActiveOrders(avail, avail, avail)

    # -- pressure step -----------------------------------------------------

    def _ppe_preconditioner(self):
        if self._ppe_precond is None:
            kind = self.config.ppe_preconditioner
            A = ppe.ppe_operator(self.disc)
            dpc = self.disc.pressure.dofs_per_cell
            if kind == "jacobi":
                self._ppe_precond = jacobi_preconditioner(A, self.mesh, dpc)
            elif kind == "sparse_lu":
                mat = assemble_by_probing(A, self.mesh, dpc)
                shift = 1e-10 * float(np.abs(mat.diagonal()).max()) if self.disc.pressure_singular else 0.0
                self._ppe_precond = SparseLUPreconditioner(mat, shift)
            else:
                self._ppe_precond = lambda r: r
        return self._ppe_precond

    def _boundary_acceleration(self, state, orders, scheme):
        """Normal-acceleration data entering the pressure condition on Dirichlet sides."""
        pb = self.problem
        if pb.g is None or not self.disc.dirichlet:
            return None
        t_new = state.t + state.dt
        dt = state.dt
        if self.config.leray:
            return lambda x: scheme.gamma0 / dt * np.asarray(call_data(pb.g, x, t_new))
        if pb.dgdt is not None:
            return pb.at("dgdt", t_new)
        times = [t_new - i * dt for i in range(orders.order + 1)]
        coef = [scheme.gamma0] + [-a for a in scheme.alpha]

        def accel(x):
            return sum(c * np.asarray(call_data(pb.g, x, s)) for c, s in zip(coef, times)) / dt

        return accel

    def pressure_rhs(self, state: SplittingState, orders: ActiveOrders | None = None,
                     flux: str = "central") -> np.ndarray:
        """Right-hand side of the modified pressure Poisson problem."""
        orders = orders or self.active_orders(state)
        disc, pb = self.disc, self.problem
        t_new = state.t + state.dt
        scheme = bdf_coefficients(orders.order)
        beta_c = extrapolation_coefficients(orders.j_c)
        beta_p = extrapolation_coefficients(orders.j_p)
        hist = state.history
        b = ppe.ppe_rhs_forcing(disc, pb.at("f", t_new))
        for w, u in zip(beta_c, hist[:orders.j_c]):
            b += w * ppe.ppe_rhs_convective(disc, u, flux=flux)
        omega = None
        if disc.dirichlet:
            u_ext = disc.velocity.field(_combine(hist[:orders.j_p], beta_p))
            omega = ppe.vorticity_projection(disc, u_ext)
        b += ppe.ppe_rhs_sipg(disc, pb.at("g_p", t_new), self._boundary_acceleration(state, orders, scheme),
                              omega, pb.nu)
        if self.config.leray:
            for a, u in zip(scheme.alpha, hist[:orders.order]):
                b -= (a / state.dt) * ppe.ppe_rhs_leray(disc, u)
        return b

    def pressure_step(self, state: SplittingState, orders: ActiveOrders | None = None) -> DGField:
        """Solve for the modified pressure at the new time level."""
        b = self.pressure_rhs(state, orders)
        nullspace = None
        if self.disc.pressure_singular:
            nullspace = constant_nullspace(self.disc.pressure)
            norm = float(np.linalg.norm(b))
            compat = abs(float(b.sum())) / (norm * math.sqrt(b.size)) if norm > 0 else 0.0
            state.last["ppe_compatibility"] = compat
            if compat > 1e-8:
                log.warning("step %d: singular pressure problem has an incompatible rhs (%.2e)",
                            state.step + 1, compat)
        x, rep = cg_solve(ppe.ppe_operator(self.disc), b, self._ppe_preconditioner(),
                          self.config.pressure_solver, nullspace, x0=state.pressure.flat)
        state.last["ppe_report"] = rep
        if not rep.converged:
            raise SchemeError(f"pressure solve failed at step {state.step + 1} ({rep.criterion})",
                              state.step + 1, state.t + state.dt, rep)
        return self.disc.pressure.field(x)

    # -- momentum step -----------------------------------------------------

    def extrapolated_velocity(self, state: SplittingState, order: int) -> DGField:
        beta = extrapolation_coefficients(order)
        return self.disc.velocity.field(_combine(state.history[:order], beta))

    def _momentum_parts(self, state, orders, pressure, u_star):
        """Operator and right-hand side of the momentum system for a given ``u*``."""
        disc, pb, cfg = self.disc, self.problem, self.config
        t_new = state.t + state.dt
        dt = state.dt
        scheme = bdf_coefficients(orders.order)
        g_new = pb.at("g", t_new)
        mode = cfg.convection.mode
        form = cfg.convection.form
        rhs = mom.forcing_rhs(disc, pb.at("f", t_new))
        rhs += mom.history_rhs(disc, state.history[:orders.order], scheme.alpha, dt)
        rhs += mom.pressure_gradient_rhs(disc, pressure, pb.at("g_p", t_new))
        rhs += mom.viscous_rhs(disc, g_new, pb.at("h_u", t_new), pb.nu)
        if mode == "explicit":
            beta = extrapolation_coefficients(orders.order)
            for i, (w, u) in enumerate(zip(beta, state.history[:orders.order])):
                g_i = pb.at("g", state.t - i * dt)
                rhs -= w * (mom.apply_convective(disc, u, u, form) - mom.convective_rhs(disc, u, g_i))
        else:
            rhs += mom.convective_rhs(disc, u_star, g_new)
        pen = cfg.penalty
        speed = mom.cell_mean_speed(disc, u_star) if (pen.enable_div or pen.enable_cont) else None
        factor = mom.divergence_penalty_factor(disc, u_star) if pen.enable_div else None
        if pen.enable_cont:
            rhs += mom.continuity_penalty_rhs(disc, u_star, g_new, speed)

        def A(x):
            y = mom.apply_mass(disc, x, scheme.gamma0, dt)
            y += mom.apply_viscous_sipg(disc, x, pb.nu)
            if mode != "explicit":
                y += mom.apply_convective(disc, x, u_star, form)
            if pen.enable_div:
                y += mom.apply_divergence_penalty(disc, x, u_star, factor)
            if pen.enable_cont:
                y += mom.apply_continuity_penalty(disc, x, u_star, speed)
            return y

        return A, rhs

    def _momentum_preconditioner(self, gamma0: float, dt: float):
        """Inverse mass, or a factorization of the time-invariant mass + viscous part.

        The factorized variant acts component by component on a scalar
        operator, since mass and viscous terms do not couple components.
        """
        if self.config.momentum_preconditioner == "inverse_mass":
            return self._mass_precond
        key = (gamma0, dt)
        if key not in self._momentum_lu:
            disc = self.disc
            scalar = FunctionSpace(self.mesh, disc.k_u, 1)
            tab = scalar.tables(disc.nq_lin)
            nu = self.problem.nu

            def A(x):
                data = x.reshape(scalar.shape)
                y = (gamma0 / dt) * scalar.apply_mass(data)
                y += sipg_apply(tab, data, nu, disc.dirichlet, disc.k_u, self.mesh)
                return y.reshape(-1)

            lu = SparseLUPreconditioner(assemble_by_probing(A, self.mesh, scalar.dofs_per_cell))
            dim = disc.dim
            shape = disc.velocity.shape

            def apply(r):
                data = np.asarray(r).reshape(shape)
                out = np.empty_like(data)
                for c in range(dim):
                    out[:, c] = lu(np.ascontiguousarray(data[:, c]).reshape(-1)).reshape(scalar.shape[:1] + scalar.shape[2:])
                return out.reshape(-1)

            self._momentum_lu = {key: apply}
        return self._momentum_lu[key]

    def _solve_momentum(self, state, orders, pressure, u_star, x0):
        A, rhs = self._momentum_parts(state, orders, pressure, u_star)
        M = self._momentum_preconditioner(bdf_coefficients(orders.order).gamma0, state.dt)
        x, rep = gmres_solve(A, rhs, M, self.config.momentum_solver, x0=x0)
        if not rep.converged:
            raise SchemeError(f"momentum solve failed at step {state.step + 1} ({rep.criterion})",
                              state.step + 1, state.t + state.dt, rep)
        return x, rep

    def momentum_step(self, state: SplittingState, pressure: DGField,
                      orders: ActiveOrders | None = None) -> DGField:
        """Solve the momentum system; implicit convection wraps it in Picard iterations."""
        orders = orders or self.active_orders(state)
        cfg = self.config.convection
        u_star = self.extrapolated_velocity(state, orders.order)
        x, rep = self._solve_momentum(state, orders, pressure, u_star, u_star.flat)
        iters = rep.iterations
        if cfg.mode == "implicit":
            converged = False
            for k in range(cfg.picard_max_iter):
                prev = x
                x, rep = self._solve_momentum(state, orders, pressure, self.disc.velocity.field(prev), prev)
                iters += rep.iterations
                incr = np.linalg.norm(x - prev) / max(np.linalg.norm(x), 1e-300)
                if not np.isfinite(incr):
                    break
                if incr <= cfg.picard_tol:
                    converged = True
                    state.last["picard_iterations"] = k + 1
                    break
            if not converged:
                raise SchemeError(f"Picard iteration diverged at step {state.step + 1}",
                                  state.step + 1, state.t + state.dt, rep)
        state.last["momentum_report"] = rep
        state.last["momentum_iterations"] = iters
        return self.disc.velocity.field(x)

    # -- driver ------------------------------------------------------------

    def advance(self, state: SplittingState) -> SplittingState:
        """One full step; the history ring is rotated in place and ``t`` advanced."""
        orders = self.active_orders(state)
        state.last = {"orders": orders}
        try:
            pressure = self.pressure_step(state, orders)
            velocity = self.momentum_step(state, pressure, orders)
        except SolverError as exc:
            raise SchemeError(f"step {state.step + 1} aborted: {exc}", state.step + 1,
                              state.t + state.dt, exc.report) from exc
        self._check_finite(state, velocity)
        state.history = [velocity] + state.history[: self.config.order - 1]
        state.pressure = pressure
        state.t += state.dt
        state.step += 1
        return state

    def _check_finite(self, state, velocity):
        data = velocity.data
        bound = self.config.blowup_factor * max(1.0, float(np.abs(state.history[-1].data).max()))
        if not np.all(np.isfinite(data)) or float(np.abs(data).max()) > bound:
            raise SchemeError(f"velocity diverged at step {state.step + 1} (t = {state.t + state.dt:.6g})",
                              state.step + 1, state.t + state.dt)

    def step_record(self, state: SplittingState) -> dict:
        last = state.last
        u = state.velocity
        return {
            "step": state.step,
            "t": state.t,
            "dt": state.dt,
            "order": last["orders"].order,
            "ppe_iterations": last["ppe_report"].iterations,
            "momentum_iterations": last["momentum_iterations"],
            "divergence_l2": divergence_l2_norm(u),
            "kinetic_energy": kinetic_energy(u),
        }

    def run(self, state: SplittingState, end_time: float, log_path=None, callback=None) -> SplittingState:
        """Advance until ``end_time``; optionally write the per-step CSV log."""
        n_steps = max(0, int(round((end_time - state.t) / state.dt)))
        handle = open(log_path, "w", newline="") if log_path is not None else None
        try:
            writer = None
            if handle is not None:
                writer = csv.DictWriter(handle, fieldnames=STEP_LOG_FIELDS)
                writer.writeheader()
            for _ in range(n_steps):
                self.advance(state)
                if writer is not None:
                    writer.writerow({k: _fmt(v) for k, v in self.step_record(state).items()})
                if callback is not None:
                    callback(state)
        finally:
            if handle is not None:
                handle.close()
        return state

    # -- diagnostics ---------------------------------------------------------

    def dual_splitting_equivalence_check(self, state: SplittingState, flux: str = "central") -> float:
        """Relative gap between the pressure right-hand side and the dual-splitting one.

        The dual-splitting intermediate velocity is built as one DG field of
        degree ``2 k_u`` (its convective part is a polynomial of that degree,
        so the mass inversion is exact) and its weak divergence is assembled
        with central fluxes.  Exact for polynomial forcing.
        """
        if not self.mesh.fully_periodic:
            raise ValueError("the equivalence check needs a fully periodic mesh")
        if self.config.convection.mode != "explicit":
            raise ValueError("the equivalence check needs explicit convection")
        orders = self.active_orders(state)
        k = self.disc.k_u
        # quadrature exact for every term: degree-2k fields against degree-(k-1) gradients
        exact_cfg = replace(self.config, overintegration=k, penalty=replace(
            self.config.penalty, enable_div=False, enable_cont=False))
        twin = SplittingScheme(self.problem, self.mesh, k, exact_cfg)
        consistent = twin.pressure_rhs(state, orders, flux=flux)
        dual = twin._dual_splitting_rhs(state, orders)
        scale = max(float(np.abs(consistent).max()), float(np.abs(dual).max()))
        if scale == 0.0:
            return 0.0
        return float(np.abs(consistent - dual).max()) / scale

    def _dual_splitting_rhs(self, state, orders):
        disc = self.disc
        k = disc.k_u
        dt = state.dt
        scheme = bdf_coefficients(orders.order)
        beta = extrapolation_coefficients(orders.j_c)
        rich = FunctionSpace(self.mesh, 2 * k, disc.dim)
        n_q = 2 * k + 1
        tab_v = disc.velocity.tables(n_q)
        tab_r = rich.tables(n_q)
        vals = np.zeros((self.mesh.num_cells, disc.dim) + (n_q,) * disc.dim)
        for a, u in zip(scheme.alpha, state.history[:orders.order]):
            vals += (a / dt) * tab_v.values(u.data)
        for w, u in zip(beta, state.history[:orders.j_c]):
            vals -= w * ppe.convective_term_at_points(tab_v.gradient(u.data), tab_v.values(u.data))
        f = self.problem.at("f", state.t + dt)
        if f is not None:
            vals += sample(f, tab_r.volume_points, None, disc.dim)
        u_hat = rich.apply_mass_inverse(tab_r.integrate(vals)) * (dt / scheme.gamma0)
        # weak form of -(gamma0/dt) div u_hat with central fluxes
        tq = disc.pressure.tables(n_q)
        out = tq.integrate_grad(tab_r.values(u_hat)[:, None])
        for af in self.mesh.axis_faces:
            a = af.axis
            uo = tab_r.face_values(u_hat[af.owner], a, 1)[:, a:a + 1]
            un = tab_r.face_values(u_hat[af.neighbor], a, 0)[:, a:a + 1]
            avg = 0.5 * (uo + un)
            scatter_interior(out, tq, af, -avg, avg)
        return (scheme.gamma0 / dt) * out.reshape(-1)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v
