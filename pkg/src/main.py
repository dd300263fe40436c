"""Delta-system transducer simulator -- Command-line entry point.

Commands:

    solve      one self-consistent operating point, printed summary
    sweep2d    efficiency map over pump and microwave detunings (CSV)
    mw-sweep   efficiency / reabsorption / reflection vs microwave power (CSV)
    opt-sweep  efficiency vs pump power (CSV)
    predict    impedance-matching and low-temperature prediction
    validate   strict config load plus cheap physics checks
    popmap     population-difference map of a converged solution (CSV)

Usage::

    # From the project root:
    python -m src.main validate --config paper-2017
    python -m src.main mw-sweep --threads 4 --out output/mw.csv
    python -m src.main sweep2d --override scenario.opt_detuning_count=11
    python -m src.main predict --t1-opt-sensitivity --out output/predict.json

Exit codes: 0 success, 1 configuration or file error, 2 solver did not
converge, 64 usage error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

from .cavity import loaded_reflection
from .config import RunConfig, apply_overrides, config_hash, get_config
from .ensemble import signal_absorption_rate
from .models import (
    CONSTANTS_VERSION,
    TWO_PI,
    ConfigError,
    ConvergenceError,
    SweepResult,
    UndefinedInputError,
    UsageError,
)
from .report import ReportRenderer
from .result_writer import write_json, write_population_map, write_result
from .scenarios import (
    grid_convergence,
    impedance_match_prediction,
    microwave_power_sweep,
    optical_power_sweep,
    population_map,
    run_validation,
    solve_operating_point,
    sweep_2d,
    t1_opt_sensitivity,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64

THREADS_ENV = "DELTA_SIM_THREADS"


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError instead of exiting."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def resolve_threads(flag: Optional[int]) -> int:
    """--threads wins, then $DELTA_SIM_THREADS, then 1."""
    if flag is not None:
        value = flag
    else:
        raw = os.environ.get(THREADS_ENV, "").strip()
        if not raw:
            return 1
        try:
            value = int(raw)
        except ValueError:
            raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if value < 1:
        raise UsageError(f"thread count must be >= 1, got {value}")
    return value


def _load(args: argparse.Namespace) -> RunConfig:
    cfg = get_config(args.config)
    if args.override:
        cfg = apply_overrides(cfg, args.override)
    logger.info("Config loaded (%s), hash %s", args.config or "default preset", config_hash(cfg)[:16])
    return cfg


def _out_path(args: argparse.Namespace, cfg: RunConfig, default_name: str) -> Path:
    return Path(args.out) if args.out else cfg.output.resolve(default_name)


def _sweep_exit(result: SweepResult) -> int:
    if result.failed_cells:
        logger.warning("%d of %d cells did not converge (NaN in output)", result.failed_cells, result.converged.size)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_solve(args: argparse.Namespace, renderer: ReportRenderer) -> int:
    cfg = _load(args)
    solution = solve_operating_point(cfg)
    try:
        r = loaded_reflection(cfg.microwave_cavity_params(), math.sqrt(solution.mw_flux), solution.fields.b)
        reflection = abs(r) ** 2
    except UndefinedInputError:
        reflection = math.nan
    kappa_abs = signal_absorption_rate(solution.response, cfg.atom_params())
    print(renderer.render(
        "solve.txt.j2",
        solution=solution,
        drive=cfg.drive,
        config_hash=config_hash(cfg),
        mw_flux=solution.mw_flux,
        pump_rabi_hz=abs(solution.fields.omega_o) / TWO_PI,
        kappa_abs=kappa_abs,
        reflection=reflection,
    ))
    if args.out:
        write_json({
            "config_hash": config_hash(cfg),
            "constants": CONSTANTS_VERSION,
            "eta": solution.eta,
            "iterations": solution.iterations,
            "residual": solution.residual,
            "signal_photons": solution.signal_photons,
            "microwave_photons": solution.microwave_photons,
            "kappa_abs": kappa_abs,
            "reflection": reflection,
        }, args.out)
    return EXIT_OK


def _run_sweep_command(
    args: argparse.Namespace,
    renderer: ReportRenderer,
    runner: Callable[[RunConfig, int], SweepResult],
    title: str,
    default_name: str,
) -> int:
    cfg = _load(args)
    threads = resolve_threads(args.threads)
    result = runner(cfg, threads)
    path = write_result(result, _out_path(args, cfg, default_name))
    peak, coords = result.peak("eta")
    print(renderer.render("sweep.txt.j2", title=title, result=result, peak=peak, coords=coords, path=path))
    return _sweep_exit(result)


def cmd_sweep2d(args: argparse.Namespace, renderer: ReportRenderer) -> int:
    return _run_sweep_command(args, renderer, sweep_2d, "Efficiency vs pump and microwave detuning", "sweep2d.csv")


def cmd_mw_sweep(args: argparse.Namespace, renderer: ReportRenderer) -> int:
    return _run_sweep_command(args, renderer, microwave_power_sweep, "Microwave power dependence", "mw_sweep.csv")


def cmd_opt_sweep(args: argparse.Namespace, renderer: ReportRenderer) -> int:
    return _run_sweep_command(args, renderer, optical_power_sweep, "Pump power dependence", "opt_sweep.csv")


def cmd_predict(args: argparse.Namespace, renderer: ReportRenderer) -> int:
    cfg = _load(args)
    threads = resolve_threads(args.threads)
    report = impedance_match_prediction(cfg, threads)
    sensitivity = t1_opt_sensitivity(cfg, threads) if args.t1_opt_sensitivity else []
    print(renderer.render("predict.txt.j2", report=report, sensitivity=sensitivity))
    if args.out:
        data = report.to_dict()
        data["constants"] = CONSTANTS_VERSION
        if sensitivity:
            data["t1_opt_sensitivity"] = [vars(row) for row in sensitivity]
        write_json(data, args.out)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace, renderer: ReportRenderer) -> int:
    cfg = _load(args)
    report = run_validation(cfg)
    print(renderer.render("validate.txt.j2", report=report, source=args.config or "default preset"))
    if args.grid_convergence:
        study = grid_convergence(cfg, resolve_threads(args.threads))
        print(
            f"  Grid {study.n_opt}x{study.n_spin}: eta={study.eta:.6e}; "
            f"{study.n_opt_fine}x{study.n_spin_fine}: eta={study.eta_fine:.6e}; "
            f"relative change {study.relative_change:.3e}"
        )
    return EXIT_OK if report.passed else EXIT_CONFIG


def cmd_popmap(args: argparse.Namespace, renderer: ReportRenderer) -> int:
    cfg = _load(args)
    report = population_map(cfg, args.p_mw_dbm)
    provenance = {"config_hash": config_hash(cfg), "constants": CONSTANTS_VERSION}
    path = write_population_map(report, _out_path(args, cfg, "popmap.csv"), provenance)
    print(renderer.render("popmap.txt.j2", report=report, path=path))
    return EXIT_OK


COMMANDS: dict[str, Callable[[argparse.Namespace, ReportRenderer], int]] = {
    "solve": cmd_solve,
    "sweep2d": cmd_sweep2d,
    "mw-sweep": cmd_mw_sweep,
    "opt-sweep": cmd_opt_sweep,
    "predict": cmd_predict,
    "validate": cmd_validate,
    "popmap": cmd_popmap,
}

COMMAND_HELP: dict[str, str] = {
    "solve": "Solve one operating point",
    "sweep2d": "Efficiency map over pump and microwave detuning",
    "mw-sweep": "Sweep microwave input power",
    "opt-sweep": "Sweep optical pump power",
    "predict": "Impedance-matching and low-temperature prediction",
    "validate": "Check a configuration",
    "popmap": "Population-difference map at one microwave power",
}


# ---------------------------------------------------------------------------
# CLI Entry Point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _ArgumentParser(add_help=False)
    common.add_argument(
        "--config",
        type=str,
        default=None,
        help="Config file (YAML/JSON) or preset name (default: bundled paper-2017 preset)",
    )
    common.add_argument("--out", type=str, default=None, help="Output file path")
    common.add_argument(
        "--threads",
        type=int,
        default=None,
        help=f"Worker processes for sweeps (default: ${THREADS_ENV} or 1)",
    )
    common.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a config field, e.g. drive.p_mw_dbm=-19.5 (repeatable)",
    )
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose (DEBUG) logging")

    parser = _ArgumentParser(
        prog="python -m src.main",
        description="Cavity-enhanced Raman heterodyne transducer simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "Examples:\n"
            "  python -m src.main validate --config paper-2017\n"
            "  python -m src.main sweep2d --threads 4\n"
            "  python -m src.main predict --out output/predict.json\n"
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True
    for name in ("solve", "sweep2d", "mw-sweep", "opt-sweep"):
        sub.add_parser(name, parents=[common], help=COMMAND_HELP[name])
    predict = sub.add_parser("predict", parents=[common], help=COMMAND_HELP["predict"])
    predict.add_argument("--t1-opt-sensitivity", action="store_true", help="Also scale T1_opt by 0.1, 1 and 10")
    validate = sub.add_parser("validate", parents=[common], help=COMMAND_HELP["validate"])
    validate.add_argument("--grid-convergence", action="store_true", help="Also compare against a doubled grid")
    popmap = sub.add_parser("popmap", parents=[common], help=COMMAND_HELP["popmap"])
    popmap.add_argument("--p-mw-dbm", type=float, default=None, help="Microwave power (default: scenario.popmap_mw_dbm)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI entry point.

    Returns:
        Exit code (0 success, 1 config/file error, 2 not converged, 64 usage).
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:          # --help
        return int(exc.code or 0)

    log_level = logging.DEBUG if args.verbose else logging.INFO
    logging.basicConfig(
        level=log_level,
        format="%(asctime)s | %(levelname)-7s | %(name)s | %(message)s",
        datefmt="%H:%M:%S",
    )

    try:
        return COMMANDS[args.command](args, ReportRenderer())
    except UsageError as exc:
        logger.error("Usage error: %s", exc)
        return EXIT_USAGE
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        print(f"\nERROR: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        logger.error("Solver did not converge: %s", exc)
        print(f"\nERROR: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except OSError as exc:
        logger.error("File error: %s", exc)
        print(f"\nERROR: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        logger.exception("Unexpected error")
        print(f"\nUNEXPECTED ERROR: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
