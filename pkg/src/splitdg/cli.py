"""Command-line driver.

The configuration is a ``key = value`` file with sections (read with
:mod:`configparser`); ``--set key=value`` overrides are applied after the
file.  Every key is declared once in :data:`REGISTRY`, which also generates
the reference document (``splitdg --reference``).

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 failed acceptance check (``verify`` mode).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import os
import re
import sys
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4

MODES = ("run", "tgv2d_temporal", "tgv2d_spatial", "tgv3d", "equivalence", "stability", "verify")
TOP_SECTION = "general"


class ConfigError(ValueError):
    """Invalid configuration; the message names the key and where it was set."""


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _optional(parser):
    def parse(text):
        return None if text.strip().lower() in ("", "none", "auto") else parser(text)

    parse.__name__ = f"optional {parser.__name__}"
    return parse


def _list_of(parser):
    def parse(text):
        items = [t for t in re.split(r"[,\s]+", text.strip()) if t]
        if not items:
            raise ValueError("expected a non-empty list")
        return tuple(parser(t) for t in items)

    parse.__name__ = f"list of {parser.__name__}"
    return parse


_parse_bool.__name__ = "bool"


@dataclass(frozen=True)
class Key:
    section: str
    name: str
    parse: object
    default: object
    doc: str
    choices: tuple | None = None


def _k(section, name, parse, default, doc, choices=None):
    return Key(section, name, parse, default, doc, choices)


REGISTRY = {k.name: k for k in (
    _k("run", "mode", str, "run", "What to run.", MODES),
    _k("run", "problem", str, "tgv2d", "Built-in problem for the run and stability modes.", ("tgv2d", "tgv3d")),
    _k("run", "seed", int, 0, "Seed for the random history of the equivalence check."),
    _k("run", "sample_every", int, 10, "Steps between energy samples in tgv3d mode."),
    _k("run", "step_log", _parse_bool, False, "Write the per-step solver log next to the results."),
    _k("problem", "nu", float, 0.025, "Kinematic viscosity of the 2D Taylor-Green vortex."),
    _k("problem", "reynolds", float, 1600.0, "Reynolds number of the 3D Taylor-Green vortex."),
    _k("mesh", "n_cells", int, 16, "Cells per axis."),
    _k("mesh", "mesh_sweep", _list_of(int), (4, 8, 16, 32), "Cells per axis for tgv2d_spatial."),
    _k("space", "k_u", int, 4, "Velocity polynomial degree (>= 2)."),
    _k("space", "k_p", _optional(int), None, "Pressure degree; must equal k_u - 1 (defaults to it)."),
    _k("space", "overintegration", int, 1, "Extra quadrature points for terms with the extrapolated velocity."),
    _k("time", "end_time", _optional(float), None, "Final time; defaults to 1 (tgv2d) or 20 (tgv3d)."),
    _k("time", "dt", _optional(float), None, "Fixed time step; takes precedence over cfl."),
    _k("time", "cfl", _optional(float), 0.4, "Target CFL number when dt is not given."),
    _k("time", "bdf_order", int, 2, "BDF order J (1..4)."),
    _k("time", "j_c", _optional(int), None, "Extrapolation order of the convective terms."),
    _k("time", "j_p", _optional(int), None, "Extrapolation order of the pressure boundary terms."),
    _k("time", "startup", str, "auto", "Startup policy.", ("auto", "exact_interpolation", "increasing_order")),
    _k("time", "dt_divisions", _list_of(int), (40, 80, 160, 320), "tgv2d_temporal sweep: dt = end_time / n."),
    _k("time", "cfl_sweep", _list_of(float), (0.5, 1.0, 2.0, 4.0, 8.0), "CFL values for stability mode."),
    _k("time", "stability_modes", _list_of(str), ("explicit", "semi_implicit"), "Convection modes for stability mode."),
    _k("scheme", "leray", _parse_bool, True, "Keep the Leray terms in the pressure equation."),
    _k("scheme", "convection_form", str, "convective", "Form of the convective term.", ("convective", "divergence")),
    _k("scheme", "convection_mode", str, "semi_implicit", "Time treatment of convection.",
       ("explicit", "semi_implicit", "implicit")),
    _k("scheme", "picard_tol", float, 1e-8, "Picard tolerance for implicit convection."),
    _k("scheme", "picard_max_iter", int, 25, "Picard iteration budget for implicit convection."),
    _k("scheme", "penalty_div", _parse_bool, True, "Divergence penalty term."),
    _k("scheme", "penalty_cont", _parse_bool, True, "Normal-continuity penalty term."),
    _k("scheme", "zeta_d", float, 1.0, "Divergence penalty factor."),
    _k("scheme", "zeta_c", float, 1.0, "Continuity penalty factor."),
    _k("scheme", "zeta_lf", float, 0.5, "Lax-Friedrichs flux factor."),
    _k("scheme", "blowup_factor", float, 1e3, "Divergence is declared when the velocity norm grows by this factor."),
    _k("solver", "pressure_rel_tol", float, 1e-6, "Relative tolerance of the pressure CG solve."),
    _k("solver", "pressure_abs_tol", float, 1e-12, "Absolute tolerance of the pressure CG solve."),
    _k("solver", "momentum_rel_tol", float, 1e-6, "Relative tolerance of the momentum GMRES solve."),
    _k("solver", "momentum_abs_tol", float, 1e-12, "Absolute tolerance of the momentum GMRES solve."),
    _k("solver", "max_iter", int, 5000, "Iteration cap of both Krylov solvers."),
    _k("solver", "restart", int, 60, "GMRES restart length."),
    _k("solver", "roundoff_floor", float, 1e-14, "Residual floor relative to the right-hand side norm."),
    _k("solver", "ppe_preconditioner", str, "sparse_lu", "Pressure preconditioner.", ("jacobi", "sparse_lu", "none")),
    _k("solver", "momentum_preconditioner", str, "auto",
       "Momentum preconditioner; auto factors mass + viscous in 2D and uses the inverse mass in 3D, "
       "where the factorization would not fit in memory at useful sizes.",
       ("auto", "inverse_mass", "mass_viscous_lu")),
    _k("output", "directory", str, "splitdg_out", "Directory for CSV and failure records."),
    _k("output", "threads", int, 1, "Thread count for the compiled kernels."),
)}

# keys that do not change results and are left out of the output hash
_NON_RESULT_KEYS = ("directory", "threads", "step_log")


@dataclass(frozen=True)
class RunConfig:
    """Validated, frozen configuration, indexed by key name."""

    values: tuple  # sorted (key, value) pairs
    sources: tuple  # (key, location) pairs for values not taken from defaults

    def __getitem__(self, key):
        return dict(self.values)[key]

    def as_dict(self) -> dict:
        return dict(self.values)

    def source(self, key: str) -> str:
        """Where a value came from: ``path:line``, ``--set #i`` or ``default``."""
        return dict(self.sources).get(key, "default")

    def digest(self) -> str:
        """Short hash of every result-relevant value; used in output file names."""
        payload = {k: v for k, v in self.values if k not in _NON_RESULT_KEYS}
        text = json.dumps(payload, sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()[:12]


def _line_of(path: str, key: str) -> int | None:
    pattern = re.compile(rf"^\s*{re.escape(key)}\s*[=:]")
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            if pattern.match(line):
                return i
    return None


def _read_file(path: str) -> list:
    """``(section, key, raw value, location)`` for every entry of the file."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    if not re.match(r"^\s*(#.*\n|;.*\n|\s*\n)*\s*\[", text):
        text = f"[{TOP_SECTION}]\n" + text
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    out = []
    for section in parser.sections():
        for key, raw in parser.items(section, raw=True):
            line = _line_of(path, key)
            where = f"{path}:{line}" if line else path
            out.append((section, key, raw, where))
    return out


def _lookup(section: str | None, key: str, where: str) -> Key:
    if key not in REGISTRY:
        raise ConfigError(f"unknown key {key!r} at {where}")
    spec = REGISTRY[key]
    if section not in (None, TOP_SECTION, spec.section):
        raise ConfigError(f"key {key!r} at {where} belongs in section [{spec.section}], not [{section}]")
    return spec


def _convert(spec: Key, raw: str, where: str):
    try:
        value = spec.parse(raw)
    except ValueError as exc:
        kind = getattr(spec.parse, "__name__", "value")
        raise ConfigError(f"key {spec.name!r} at {where}: expected {kind}, got {raw!r} ({exc})") from exc
    if spec.choices is not None:
        items = value if isinstance(value, tuple) else (value,)
        for item in items:
            if item not in spec.choices:
                raise ConfigError(f"key {spec.name!r} at {where}: {item!r} is not one of {spec.choices}")
    return value


def parse_config(path=None, overrides=()) -> RunConfig:
    """Read, override and validate a configuration.

    Parameters
    ----------
    path : str or None
        Configuration file; ``None`` starts from the defaults.
    overrides : iterable of str
        ``key=value`` or ``section.key=value`` strings applied after the file.

    Raises
    ------
    ConfigError
        Unknown key, malformed value or violated constraint, naming the key
        and where it was set.
    """
    values = {name: spec.default for name, spec in REGISTRY.items()}
    where_set = {}
    entries = []
    if path is not None:
        if not os.path.isfile(path):
            raise ConfigError(f"configuration file {path!r} not found")
        entries.extend(_read_file(str(path)))
    for i, item in enumerate(overrides):
        if "=" not in item:
            raise ConfigError(f"override #{i + 1} {item!r} is not key=value")
        key, raw = (s.strip() for s in item.split("=", 1))
        section, _, name = key.rpartition(".")
        entries.append((section or None, name, raw, f"--set #{i + 1}"))
    for section, key, raw, where in entries:
        spec = _lookup(section, key, where)
        values[key] = _convert(spec, raw, where)
        where_set[key] = where
    _validate(values, where_set)
    return RunConfig(tuple(sorted(values.items())), tuple(sorted(where_set.items())))


def _validate(v: dict, where: dict):
    def fail(key, message):
        raise ConfigError(f"key {key!r} at {where.get(key, 'default')}: {message}")

    if v["k_u"] < 2:
        fail("k_u", "k_u must be >= 2")
    if v["k_p"] is None:
        v["k_p"] = v["k_u"] - 1
    elif v["k_p"] != v["k_u"] - 1:
        fail("k_p", f"inf-sup stable pairing requires k_p = k_u - 1 = {v['k_u'] - 1}, got {v['k_p']}")
    if not 1 <= v["bdf_order"] <= 4:
        fail("bdf_order", "BDF order must lie in 1..4")
    for key in ("j_c", "j_p"):
        if v[key] is not None and not 1 <= v[key] <= v["bdf_order"]:
            fail(key, f"must lie in 1..bdf_order={v['bdf_order']}")
    for key in ("nu", "reynolds", "picard_tol", "pressure_rel_tol", "pressure_abs_tol",
                "momentum_rel_tol", "momentum_abs_tol", "blowup_factor"):
        if v[key] <= 0:
            fail(key, "must be positive")
    for key in ("dt", "cfl", "end_time"):
        if v[key] is not None and v[key] <= 0:
            fail(key, "must be positive")
    for key in ("n_cells", "sample_every", "max_iter", "restart", "threads", "picard_max_iter"):
        if v[key] < 1:
            fail(key, "must be >= 1")
    for key in ("zeta_d", "zeta_c", "zeta_lf", "roundoff_floor", "overintegration"):
        if v[key] < 0:
            fail(key, "must be non-negative")
    if any(n < 1 for n in v["mesh_sweep"]):
        fail("mesh_sweep", "cell counts must be >= 1")
    if any(n < 1 for n in v["dt_divisions"]):
        fail("dt_divisions", "divisions must be >= 1")
    if any(c <= 0 for c in v["cfl_sweep"]):
        fail("cfl_sweep", "CFL values must be positive")
    if v["mode"] in ("tgv2d_temporal", "tgv2d_spatial") and v["problem"] != "tgv2d":
        fail("problem", f"mode {v['mode']} runs the tgv2d problem")
    if v["mode"] == "run" and v["dt"] is None and v["cfl"] is None:
        fail("cfl", "run mode needs dt or cfl")
    if v["mode"] == "stability" and v["problem"] != "tgv2d":
        fail("problem", "stability mode runs the tgv2d problem")


def config_reference() -> str:
    """Markdown reference of every configuration key, generated from the registry."""
    lines = [
        "# Configuration reference",
        "",
        "Generated by `splitdg --reference`. Keys go under their section in the file",
        "(keys before any section header are also accepted) or on the command line as",
        "`--set key=value` / `--set section.key=value`.",
        "",
    ]
    for section in dict.fromkeys(k.section for k in REGISTRY.values()):
        lines += [f"## [{section}]", "", "| key | type | default | description |", "|---|---|---|---|"]
        for k in REGISTRY.values():
            if k.section != section:
                continue
            kind = getattr(k.parse, "__name__", "str")
            default = "none" if k.default is None else (
                ", ".join(map(str, k.default)) if isinstance(k.default, tuple) else str(k.default))
            doc = k.doc + (f" One of: {', '.join(k.choices)}." if k.choices else "")
            lines.append(f"| `{k.name}` | {kind} | `{default}` | {doc} |")
        lines.append("")
    return "\n".join(lines)


# -- building library objects from a config ---------------------------------------


def build_problem(cfg: RunConfig):
    from .problem import tgv2d_problem, tgv3d_problem

    if cfg["mode"] in ("tgv3d",) or (cfg["mode"] == "run" and cfg["problem"] == "tgv3d"):
        return tgv3d_problem(reynolds=cfg["reynolds"])
    return tgv2d_problem(nu=cfg["nu"])


def build_scheme_config(cfg: RunConfig, dim: int = 2):
    from .operators.base import ConvectionConfig, PenaltyConfig
    from .scheme import SchemeConfig
    from .solvers import SolverSettings

    def solver(prefix):
        return SolverSettings(rel_tol=cfg[f"{prefix}_rel_tol"], abs_tol=cfg[f"{prefix}_abs_tol"],
                              max_iter=cfg["max_iter"], restart=cfg["restart"],
                              roundoff_floor=cfg["roundoff_floor"])

    return SchemeConfig(
        order=cfg["bdf_order"],
        j_c=cfg["j_c"],
        j_p=cfg["j_p"],
        leray=cfg["leray"],
        convection=ConvectionConfig(form=cfg["convection_form"], mode=cfg["convection_mode"],
                                    picard_tol=cfg["picard_tol"], picard_max_iter=cfg["picard_max_iter"]),
        penalty=PenaltyConfig(zeta_d=cfg["zeta_d"], zeta_c=cfg["zeta_c"], zeta_lf=cfg["zeta_lf"],
                              enable_div=cfg["penalty_div"], enable_cont=cfg["penalty_cont"]),
        pressure_solver=solver("pressure"),
        momentum_solver=solver("momentum"),
        ppe_preconditioner=cfg["ppe_preconditioner"],
        momentum_preconditioner=_momentum_preconditioner(cfg["momentum_preconditioner"], dim),
        overintegration=cfg["overintegration"],
        startup=cfg["startup"],
        blowup_factor=cfg["blowup_factor"],
    )


def _momentum_preconditioner(name: str, dim: int) -> str:
    if name != "auto":
        return name
    return "mass_viscous_lu" if dim == 2 else "inverse_mass"


def build_case(cfg: RunConfig):
    from .benchmarks.studies import CaseSetup

    problem = build_problem(cfg)
    end_time = cfg["end_time"] if cfg["end_time"] is not None else problem.metadata["end_time"]
    return CaseSetup(problem, cfg["n_cells"], cfg["k_u"], build_scheme_config(cfg, len(problem.bounds)), end_time,
                     dt=cfg["dt"], cfl=None if cfg["dt"] is not None else cfg["cfl"])


# -- modes ----------------------------------------------------------------------


class _Outputs:
    def __init__(self, cfg: RunConfig):
        self.dir = Path(cfg["directory"])
        self.dir.mkdir(parents=True, exist_ok=True)
        self.stem = f"{cfg['mode']}_{cfg.digest()}"
        self.written = []

    def path(self, suffix: str) -> Path:
        p = self.dir / f"{self.stem}{suffix}"
        self.written.append(p)
        return p


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _mode_run(cfg, out):
    from .benchmarks.studies import run_case

    setup = build_case(cfg)
    log_path = out.path("_steps.csv")
    res = run_case(setup, log_path=log_path)
    _write_rows(out.path(".csv"), ("n_steps", "dt", "end_time", "eps_u", "eps_p"),
                [(res.n_steps, res.dt, res.state.t, res.eps_u, res.eps_p)])


def _mode_study(kind):
    def run(cfg, out):
        from .benchmarks.studies import convergence_study

        base = build_case(cfg)
        if kind == "temporal":
            sweep = [base.end_time / n for n in cfg["dt_divisions"]]
        else:
            sweep = list(cfg["mesh_sweep"])
            if base.dt is None:
                # one fixed step for every mesh: the CFL step of the finest one
                fine = replace(base, n_cells=max(sweep))
                from .scheme import SplittingScheme

                base = replace(base, dt=SplittingScheme(fine.problem, fine.mesh(), fine.k_u, fine.scheme)
                               .time_step(base.end_time, None, base.cfl), cfl=None)
        log_dir = str(out.dir) if cfg["step_log"] else None
        table = convergence_study(kind, sweep, base, log_dir=log_dir)
        table.to_csv(out.path(".csv"))

    return run


def _mode_tgv3d(cfg, out):
    from .benchmarks.studies import run_tgv3d, write_series_csv

    setup = build_case(cfg)
    log_path = out.path("_steps.csv") if cfg["step_log"] else None
    series = run_tgv3d(setup, sample_every=cfg["sample_every"], log_path=log_path)
    write_series_csv(series, out.path(".csv"))


def _mode_equivalence(cfg, out):
    from .benchmarks.studies import equivalence_discrepancy

    rows = []
    for flux in ("central", "upwind"):
        gap = equivalence_discrepancy(n_cells=cfg["n_cells"], k_u=cfg["k_u"], order=cfg["bdf_order"],
                                      flux=flux, seed=cfg["seed"])
        rows.append((flux, gap))
    _write_rows(out.path(".csv"), ("flux", "relative_discrepancy"), rows)


def _mode_stability(cfg, out):
    from .benchmarks.studies import stability_sweep

    outcomes = stability_sweep(build_case(cfg), cfg["stability_modes"], cfg["cfl_sweep"])
    _write_rows(out.path(".csv"), ("mode", "cfl", "completed", "failed_step"),
                [(o.mode, o.cfl, int(o.completed), "" if o.failed_step is None else o.failed_step)
                 for o in outcomes])


def verify_checks(cfg: RunConfig) -> list:
    """Fast self-checks: ``(name, value, threshold, passed)`` rows."""
    from .benchmarks.studies import equivalence_discrepancy
    from .problem import manufactured_forcing_check, tgv2d_problem
    from .time_integration import bdf_coefficients, extrapolation_coefficients

    rows = []
    worst = 0.0
    for J in range(1, 5):
        s = bdf_coefficients(J)
        for q in range(J + 1):
            # d/dt t^q at t = 1 from samples at 1, 0, -1, ... with dt = 1
            lhs = s.gamma0 * 1.0 - sum(a * (1.0 - i) ** q for i, a in enumerate(s.alpha, start=1))
            worst = max(worst, abs(lhs - q))
        beta = extrapolation_coefficients(J)
        for q in range(J):
            worst = max(worst, abs(sum(b * (1.0 - i) ** q for i, b in enumerate(beta, start=1)) - 1.0))
    rows.append(("coefficient_order_conditions", worst, 1e-13, worst <= 1e-13))
    forcing = manufactured_forcing_check(tgv2d_problem(nu=cfg["nu"]))
    rows.append(("tgv2d_forcing_residual", forcing, 1e-10, forcing <= 1e-10))
    central = equivalence_discrepancy(k_u=3, flux="central", seed=cfg["seed"])
    upwind = equivalence_discrepancy(k_u=3, flux="upwind", seed=cfg["seed"])
    rows.append(("equivalence_central", central, 1e-11, central <= 1e-11))
    rows.append(("equivalence_upwind", upwind, 1e-6, upwind > 1e-6))
    return rows


def _mode_verify(cfg, out):
    rows = verify_checks(cfg)
    _write_rows(out.path(".csv"), ("check", "value", "threshold", "passed"),
                [(n, v, t, int(p)) for n, v, t, p in rows])
    return EXIT_OK if all(r[3] for r in rows) else EXIT_CHECK


_MODES = {
    "run": _mode_run,
    "tgv2d_temporal": _mode_study("temporal"),
    "tgv2d_spatial": _mode_study("spatial"),
    "tgv3d": _mode_tgv3d,
    "equivalence": _mode_equivalence,
    "stability": _mode_stability,
    "verify": _mode_verify,
}


def _failure_record(exc) -> dict:
    from .benchmarks.studies import StudyError

    cause = exc.cause if isinstance(exc, StudyError) and exc.cause is not None else exc
    record = {"error": type(cause).__name__, "message": str(exc),
              "step": getattr(cause, "step", None), "t": getattr(cause, "t", None)}
    report = getattr(cause, "report", None)
    if report is not None:
        record["solver"] = {"converged": report.converged, "iterations": report.iterations,
                            "residual": report.residual, "criterion": report.criterion}
    return record


def _set_threads(n: int):
    try:
        import numba
    except ImportError:  # pragma: no cover
        return
    with warnings.catch_warnings():
        # the threading-layer probe warns about optional backends it cannot load
        warnings.simplefilter("ignore")
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def run(cfg: RunConfig) -> int:
    """Execute the configured mode; returns the process exit code."""
    from .benchmarks.studies import StudyError
    from .scheme import SchemeError

    _set_threads(cfg["threads"])
    out = _Outputs(cfg)
    try:
        code = _MODES[cfg["mode"]](cfg, out)
    except (SchemeError, StudyError) as exc:
        path = out.dir / f"{out.stem}_failure.json"
        record = _failure_record(exc)
        record["mode"] = cfg["mode"]
        path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n")
        print(f"solver failure: {exc} (record: {path})", file=sys.stderr)
        return EXIT_SOLVER
    for p in out.written:
        print(p)
    return EXIT_OK if code is None else code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="splitdg", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="configuration file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a configuration value (repeatable)")
    ap.add_argument("--output", help="output directory (same as --set directory=...)")
    ap.add_argument("--threads", type=int, help="kernel thread count (same as --set threads=...)")
    ap.add_argument("--reference", action="store_true", help="print the configuration reference and exit")
    args = ap.parse_args(argv)
    if args.reference:
        print(config_reference())
        return EXIT_OK
    overrides = list(args.overrides)
    if args.output is not None:
        overrides.append(f"directory={args.output}")
    if args.threads is not None:
        overrides.append(f"threads={args.threads}")
    try:
        cfg = parse_config(args.config, overrides)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
