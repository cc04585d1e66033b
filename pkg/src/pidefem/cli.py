"""Command line: single solves, convergence studies, benchmark reports.

Options can come from flags or from an INI-style config file
(``--config run.cfg``); flags override file values.  Study presets
``table1`` / ``table2`` reproduce the published convergence tables at
desk scale (rows beyond h = 1/128 are opt-in via ``--large-rows``).
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass, fields as dc_fields
from fractions import Fraction
from pathlib import Path
from typing import Optional

from . import __version__
from .mesh import build_mesh
from .problems import PROBLEM_NAMES, make_problem, section5_constants
from .schemes import SCHEME_NAMES, check_stepsize, run
from .solvers import SolverConfig
from .verification import (
    ConvergenceReport,
    StudyRow,
    error_norms,
    run_convergence_study,
    table1_rows,
    table2_rows,
)


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scheme: str = "standard"
    preset: Optional[str] = None
    problem: str = "paper_section5"
    forcing: str = "operator"
    h: Optional[float] = None
    H: Optional[float] = None
    dt: Optional[float] = None
    T: float = 1.0
    linear_tol: float = 1e-10
    newton_tol: float = 1e-10
    linear_max_iters: int = 20000
    newton_max_iters: int = 30
    nonsymmetric_method: str = "bicgstab"
    nu0: Optional[float] = None
    mu0: Optional[float] = None
    K1: Optional[float] = None
    out_csv: Optional[str] = None
    out_md: Optional[str] = None
    benchmark: bool = False
    large_rows: bool = False
    stability: bool = False
    threads: int = 1

    def validate(self):
        if self.scheme not in SCHEME_NAMES:
            raise ConfigError(
                f"unknown scheme {self.scheme!r}; choose from {SCHEME_NAMES}"
            )
        if self.preset not in (None, "table1", "table2"):
            raise ConfigError(f"unknown preset {self.preset!r}")
        if self.forcing not in ("operator", "paper"):
            raise ConfigError(
                f"unknown forcing mode {self.forcing!r} (operator or paper)"
            )
        if self.T <= 0:
            raise ConfigError("T must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.preset is None:
            if self.h is None or self.dt is None:
                raise ConfigError("either --preset or both --h and --dt required")
            n = round(self.T / self.dt)
            if n < 1 or abs(n * self.dt - self.T) > 1e-12 * max(1.0, self.T):
                raise ConfigError(
                    f"dt = {self.dt} does not divide T = {self.T} into an "
                    f"integral number of steps"
                )
            if self.scheme != "standard" and self.H is None:
                raise ConfigError(f"scheme {self.scheme} needs --H")
        return self

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            linear_tol=self.linear_tol,
            newton_tol=self.newton_tol,
            linear_max_iters=self.linear_max_iters,
            newton_max_iters=self.newton_max_iters,
            nonsymmetric_method=self.nonsymmetric_method,
        )

    def constants(self):
        from .problems import StabilityConstants

        if not self.stability:
            return None
        defaults = (
            section5_constants() if self.problem == "paper_section5" else None
        )
        vals = {}
        for name in ("nu0", "mu0", "K1"):
            given = getattr(self, name)
            if given is not None:
                vals[name] = given
            elif defaults is not None:
                vals[name] = getattr(defaults, name)
            else:
                raise ConfigError(
                    f"--stability needs --{name} for problem {self.problem!r}"
                )
        return StabilityConstants(**vals)

    def study_rows(self):
        if self.preset == "table1":
            return table1_rows(self.large_rows)
        if self.preset == "table2":
            return table2_rows(self.large_rows)
        H = self.H if self.scheme != "standard" else None
        return [StudyRow(h=self.h, dt=self.dt, H=H)]


def _parse_number(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"cannot parse number {text!r}") from exc


_FILE_SCHEMA = {
    "run": {
        "scheme": str, "preset": str, "problem": str, "forcing": str,
        "h": _parse_number, "H": _parse_number, "dt": _parse_number,
        "T": _parse_number, "out_csv": str, "out_md": str,
        "benchmark": bool, "large_rows": bool, "stability": bool,
        "threads": int,
    },
    "solver": {
        "linear_tol": float, "newton_tol": float,
        "linear_max_iters": int, "newton_max_iters": int,
        "nonsymmetric_method": str,
    },
    "constants": {"nu0": float, "mu0": float, "K1": float},
}


def _load_config_file(path: str) -> dict:
    parser = configparser.ConfigParser()
    if not Path(path).exists():
        raise ConfigError(f"config file {path!r} does not exist")
    parser.read(path)
    values = {}
    for section in parser.sections():
        if section not in _FILE_SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        schema = _FILE_SCHEMA[section]
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(
                    f"unknown key {key!r} in config section [{section}]"
                )
            conv = schema[key]
            if conv is bool:
                values[key] = parser.getboolean(section, key)
            else:
                values[key] = conv(raw)
    return values


def build_arg_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="pidefem",
        description=(
            "Finite element solver and convergence harness for parabolic "
            "integro-differential equations with nonlinear memory"
        ),
    )
    p.add_argument("--version", action="version", version=f"pidefem {__version__}")
    p.add_argument("--config", help="INI config file; flags override it")
    p.add_argument("--scheme", choices=SCHEME_NAMES)
    p.add_argument("--preset", choices=("table1", "table2"))
    p.add_argument("--problem",
                   help=f"one of {PROBLEM_NAMES} or path to a .py file")
    p.add_argument("--forcing", choices=("operator", "paper"))
    p.add_argument("--h", type=_parse_number, help="fine mesh size, e.g. 1/64")
    p.add_argument("--H", type=_parse_number, help="coarse mesh size, e.g. 1/8")
    p.add_argument("--dt", type=_parse_number, help="time step, e.g. 1/32")
    p.add_argument("--T", type=_parse_number, help="final time (default 1)")
    p.add_argument("--linear-tol", dest="linear_tol", type=float)
    p.add_argument("--newton-tol", dest="newton_tol", type=float)
    p.add_argument("--nu0", type=float)
    p.add_argument("--mu0", type=float)
    p.add_argument("--K1", type=float)
    p.add_argument("--out-csv", dest="out_csv")
    p.add_argument("--out-md", dest="out_md")
    p.add_argument("--benchmark", action="store_true", default=None,
                   help="report timings and history-memory instrumentation")
    p.add_argument("--large-rows", dest="large_rows", action="store_true",
                   default=None, help="include the h = 1/256 and 1/512 rows")
    p.add_argument("--stability", action="store_true", default=None,
                   help="evaluate the stability inequality along the run")
    p.add_argument("--threads", type=int)
    return p


def parse_config(argv) -> RunConfig:
    """Build a validated RunConfig from flags and an optional config file."""
    args = build_arg_parser().parse_args(argv)
    values = {}
    if args.config:
        values.update(_load_config_file(args.config))
    field_names = {f.name for f in dc_fields(RunConfig)}
    for name in field_names:
        flag = getattr(args, name, None)
        if flag is not None:
            values[name] = flag
    unknown = set(values) - field_names
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    return RunConfig(**values).validate()


def _print_benchmark(report: ConvergenceReport, cfg: RunConfig, out):
    print("benchmark:", file=out)
    for r in report.rows:
        nf, nc = r.row.mesh_counts()
        fine_nodes = (nf + 1) ** 2
        line = (
            f"  h=1/{nf}"
            + (f" H=1/{nc}" if nc else "")
            + f" dt={r.row.dt:g}: wall {r.wall_time_s:.2f}s, "
            f"peak history {r.peak_history_bytes} B, "
            f"fine-history entries {r.fine_history_entries}, "
            f"newton {r.newton_iters}, linear {r.linear_iters}"
        )
        if nc:
            coarse_nodes = (nc + 1) ** 2
            line += f", coarse/fine nodes {coarse_nodes / fine_nodes:.4f}"
        print(line, file=out)


def main(cfg: RunConfig, out=None) -> int:
    """Execute a solve or study; returns the process exit code."""
    out = out or sys.stdout
    solver_cfg = cfg.solver_config()
    constants = cfg.constants()

    if cfg.stability and cfg.preset is None:
        code = _single_run_with_stability(cfg, solver_cfg, constants, out)
        if code != 0:
            return code

    rows = cfg.study_rows()
    factory = lambda: make_problem(  # noqa: E731
        cfg.problem,
        "paper_formula" if cfg.forcing == "paper" else "operator_derived",
    )
    report = run_convergence_study(
        cfg.scheme, rows, factory, T=cfg.T, config=solver_cfg,
        threads=cfg.threads,
    )

    csv_text = report.to_csv(include_timings=cfg.benchmark)
    if cfg.out_csv:
        Path(cfg.out_csv).write_text(csv_text)
        print(f"wrote {cfg.out_csv}", file=out)
    md_text = report.to_markdown()
    if cfg.out_md:
        Path(cfg.out_md).write_text(md_text)
        print(f"wrote {cfg.out_md}", file=out)

    print(md_text, file=out)
    for k, r in enumerate(report.rows):
        if r.failed:
            print(f"row {k} failed: {r.error}", file=out)
    if cfg.benchmark:
        _print_benchmark(report, cfg, out)
    return 1 if report.failed else 0


def _single_run_with_stability(cfg, solver_cfg, constants, out) -> int:
    spec = make_problem(
        cfg.problem,
        "paper_formula" if cfg.forcing == "paper" else "operator_derived",
    )
    nf = round(1.0 / cfg.h)
    fine = build_mesh(nf, nf)
    coarse = None
    if cfg.scheme != "standard":
        coarse = build_mesh(round(1.0 / cfg.H), round(1.0 / cfg.H))
    chk = check_stepsize(cfg.dt, cfg.T, constants.nu0, constants.mu0,
                         constants.K1)
    print(
        f"step-size check: {chk.label} "
        f"(L2 threshold {chk.l2_threshold:.4g}, "
        f"H1 threshold {chk.h1_threshold:.4g})", file=out,
    )
    try:
        result = run(cfg.scheme, spec, fine, cfg.dt, cfg.T,
                     coarse_mesh=coarse, config=solver_cfg,
                     constants=constants)
    except Exception as exc:  # noqa: BLE001
        print(f"run failed: {type(exc).__name__}: {exc}", file=out)
        return 1
    stab = result.stability
    ok = stab.satisfied and stab.all_finite
    print(
        f"stability inequality: {'satisfied' if ok else 'VIOLATED'} over "
        f"{result.n_steps} steps (finite: {stab.all_finite})", file=out,
    )
    if spec.exact_solution is not None:
        l2, h1 = error_norms(result.fine, spec.exact_solution,
                             spec.exact_gradient, cfg.T)
        print(f"final errors: L2 {l2:.5e}, H1 {h1:.5e}", file=out)
    return 0 if ok else 1


def console_main(argv=None) -> int:
    try:
        cfg = parse_config(argv if argv is not None else sys.argv[1:])
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        return main(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(console_main())
