"""
Command-line entry point: ``run``, ``sweep``, ``check`` and ``diag``.

Exit codes: 0 ok, 1 usage or configuration error, 2 runtime failure,
3 invariant failure.
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from src.config import ConfigError, RunConfig, output_directory, parse_config, to_solver_config
from src.diagnostics.checks import CHECK_COLUMNS, run_invariant_suite
from src.diagnostics.korn import korn_ratio
from src.diagnostics.ledger import LEDGER_COLUMNS, EnergyLedger, LedgerState
from src.diagnostics.local_energy import LOCAL_ENERGY_COLUMNS, LocalEnergyObserver, local_energy_residual
from src.diagnostics.pressure_lemma import LEMMA_COLUMNS, PressureLemmaObserver, pressure_lemma_check
from src.diagnostics.sweep import sweep
from src.diagnostics.bump_functions import default_library
from src.diagnostics.weak_form import (
    WEAK_COLUMNS,
    ScalarTestField,
    VectorTestField,
    WeakResidualObserver,
    weak_residual,
)
from src.elliptic import EllipticSolveError
from src.observability.metrics import metrics_text
from src.observability.structured_logger import StructuredLogger, configure_logging, set_run_id
from src.persistence import (
    SnapshotError,
    SnapshotObserver,
    atomic_write_text,
    grid_from_header,
    load_trajectory,
    read_snapshot,
    read_snapshot_header,
    write_csv,
    write_json,
)
from src.stepper import SimState, SimulationError, SolverConfig, run

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_INVARIANT = 3

DIAG_KINDS = ("ledger", "local", "lemma", "weak")

logger = StructuredLogger(__name__)


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; usage errors here exit with 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="acns", description="Artificial-compressibility Navier-Stokes with slip walls")
    parser.add_argument("--log-level", default=None, help="overrides ACNS_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    p_run = sub.add_parser("run", help="run one simulation")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p_run.add_argument("--resume", default=None, help="snapshot to continue from")
    p_run.add_argument("--metrics-file", default=None)

    p_sweep = sub.add_parser("sweep", help="run one simulation per epsilon")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--eps", required=True, help="comma separated, strictly decreasing")
    p_sweep.add_argument("--jobs", type=int, default=1)
    p_sweep.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p_sweep.add_argument("--metrics-file", default=None)

    p_check = sub.add_parser("check", help="run the discrete invariant suite")
    p_check.add_argument("--grid", type=int, default=16)
    p_check.add_argument("--trials", type=int, default=100)
    p_check.add_argument("--seed", type=int, default=0)

    p_diag = sub.add_parser("diag", help="diagnostics over a snapshot directory")
    p_diag.add_argument("--trajectory", required=True)
    p_diag.add_argument("--which", required=True, choices=DIAG_KINDS)
    p_diag.add_argument("--output", default=None, help="CSV path (default: inside the trajectory directory)")
    return parser


def parse_eps_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise UsageError(f"--eps must be a comma separated list of numbers: {e}") from e


def _write_metrics(path: Optional[str]) -> None:
    if path:
        atomic_write_text(path, metrics_text())


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _observers(cfg: RunConfig, solver: SolverConfig, out: Path, resume_header: Optional[dict]):
    diag = cfg.diagnostics
    every = cfg.output.sample_every
    named = {}
    if diag.ledger:
        ledger = EnergyLedger(sample_every=every)
        if resume_header and resume_header.get("ledger_state"):
            ledger.state = LedgerState.from_dict(resume_header["ledger_state"])
        named["ledger"] = ledger
    if diag.local_energy and solver.T > 0:
        named["local"] = LocalEnergyObserver(default_library(solver.grid, solver.T, diag.test_functions))
    if diag.pressure_lemma:
        named["lemma"] = PressureLemmaObserver(delta=diag.lemma_delta, sample_every=every)
    if diag.weak_residual and solver.T > 0:
        named["weak"] = WeakResidualObserver()
    if cfg.output.snapshot_every > 0:
        named["snapshots"] = SnapshotObserver(out, cfg.output.snapshot_every, ledger=named.get("ledger"))
    return named


def cmd_run(config_path, overrides: Sequence[str] = (), resume: Optional[str] = None, metrics_file=None) -> int:
    cfg = parse_config(config_path, overrides)
    solver = to_solver_config(cfg)
    out = output_directory(cfg)
    out.mkdir(parents=True, exist_ok=True)

    start, header = None, None
    if resume:
        header = read_snapshot_header(resume)
        start = read_snapshot(resume, solver.grid)
    observers = _observers(cfg, solver, out, header)
    result = run(solver, observers=list(observers.values()), start=start, log_every=cfg.output.sample_every * 100)

    summary = {
        "epsilon": solver.epsilon,
        "T": solver.T,
        "dt": solver.dt,
        "diffusion_mode": solver.diffusion_mode,
        "grid": solver.grid.describe(),
        "steps": result.steps,
        "final_step": result.state.step,
        "final_t": result.state.t,
        "final_kinetic": result.state.kinetic_energy(),
    }
    if "ledger" in observers:
        ledger = observers["ledger"]
        write_csv(out / "ledger.csv", LEDGER_COLUMNS, [r.as_list() for r in ledger.rows])
        summary["ledger"] = ledger.summary()
    if "local" in observers:
        reports = observers["local"].reports()
        write_csv(out / "local_energy.csv", LOCAL_ENERGY_COLUMNS, [r.as_list() for r in reports])
        summary["local_energy_min_slack"] = min((r.slack for r in reports), default=0.0)
    if "lemma" in observers:
        report = observers["lemma"].report
        write_csv(out / "pressure_lemma.csv", LEMMA_COLUMNS, [r.as_list() for r in report.rows])
        summary["pressure_lemma"] = report.summary()
    if "weak" in observers:
        report = observers["weak"].report()
        write_csv(out / "weak_residual.csv", WEAK_COLUMNS, [report.as_list()])
        summary["weak_residual"] = {"momentum": report.momentum_residual, "pressure": report.pressure_residual}
    if cfg.diagnostics.korn and solver.grid.wall_axes:
        summary["korn_ratio"] = korn_ratio(solver.grid, cfg.diagnostics.korn_samples, seed=cfg.ic.seed)
    write_json(out / "summary.json", summary)
    _write_metrics(metrics_file)
    logger.info("run reports written", directory=str(out))
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep / check / diag
# ---------------------------------------------------------------------------

def cmd_sweep(config_path, eps_list: Sequence[float], jobs: int = 1, overrides: Sequence[str] = (), metrics_file=None) -> int:
    cfg = parse_config(config_path, overrides)
    solver = to_solver_config(cfg)
    report = sweep(solver, eps_list, jobs=jobs, sample_every=cfg.output.sample_every, output_dir=output_directory(cfg))
    _write_metrics(metrics_file)
    return EXIT_RUNTIME if any(r.status != "ok" for r in report.rows) else EXIT_OK


def cmd_check(grid_size: int = 16, trials: int = 100, seed: int = 0, stream=None) -> int:
    stream = stream or sys.stdout
    results = run_invariant_suite(grid_size=grid_size, trials=trials, seed=seed)
    print("  ".join(CHECK_COLUMNS), file=stream)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<28} {r.grid:<28} {r.value:.3e} <= {r.threshold:.1e}", file=stream)
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVARIANT


def cmd_diag(trajectory, which: str, output=None) -> int:
    if which not in DIAG_KINDS:
        raise UsageError(f"--which must be one of {DIAG_KINDS}")
    records, header = load_trajectory(trajectory)
    grid = grid_from_header(header)
    epsilon = float(header["epsilon"])
    T = records[-1].t if records else float(header["t"])
    target = Path(output) if output else Path(trajectory) / f"diag_{which}.csv"

    if which == "ledger":
        solver = SolverConfig(grid=grid, epsilon=epsilon, T=T)
        ledger = EnergyLedger()
        if records:
            first = records[0]
            ledger.on_start(SimState(t=first.t_prev, step=first.step - 1, u=first.u_prev, p=first.p_prev), solver)
        for record in records:
            ledger.on_step(record, solver)
        write_csv(target, LEDGER_COLUMNS, [r.as_list() for r in ledger.rows])
    elif which == "local":
        reports = [local_energy_residual(records, phi, epsilon) for phi in default_library(grid, T)]
        write_csv(target, LOCAL_ENERGY_COLUMNS, [r.as_list() for r in reports])
    elif which == "lemma":
        report = pressure_lemma_check(records, epsilon)
        write_csv(target, LEMMA_COLUMNS, [r.as_list() for r in report.rows])
    else:
        report = weak_residual(records, VectorTestField(grid, T), ScalarTestField(grid, T), epsilon)
        write_csv(target, WEAK_COLUMNS, [report.as_list()])
    logger.info("diagnostic written", which=which, path=str(target), records=len(records))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    set_run_id()
    try:
        if args.command == "run":
            return cmd_run(args.config, args.overrides, args.resume, args.metrics_file)
        if args.command == "sweep":
            return cmd_sweep(args.config, parse_eps_list(args.eps), args.jobs, args.overrides, args.metrics_file)
        if args.command == "check":
            return cmd_check(args.grid, args.trials, args.seed)
        return cmd_diag(args.trajectory, args.which, args.output)
    except (ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SimulationError, EllipticSolveError, SnapshotError, OSError) as e:
        logger.error("command failed", command=args.command, error=str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
