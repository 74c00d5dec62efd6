"""Command-line interface: run, batch, report, scenarios and calibration.

Exit codes: 0 success, 1 some batch runs failed, 2 usage or configuration error.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from loguru import logger
from pydantic import ValidationError
from tabulate import tabulate

from src.artifacts import (
    BOXPLOT_FILE,
    RECORDS_FILE,
    REPORT_JSON_FILE,
    REPORT_TEXT_FILE,
    RUN_FILE,
    TRAJECTORY_DIR,
    format_report,
    prepare_output_dir,
    resolve_output_dir,
    write_records_csv,
    write_records_json,
    write_report,
    write_run_json,
)
from src.exceptions import ConfigurationError, RelLocError
from src.harness import RunConfig, RunRecord, batch_configs, run_batch, run_one
from src.scenarios import load_scenarios, save_catalog
from src.sim_config import ESTIMATOR_NAMES, SimulationConfig
from src.stats import compare_report
from src.uwb_model import default_calibration, load_calibration, save_calibration

EXIT_OK = 0
EXIT_PARTIAL_FAILURE = 1
EXIT_USAGE = 2

RECORDS_JSON_FILE = "records.json"

LOG_FORMAT = (
    "<green>{time:YYYY-MM-DD HH:mm:ss.SSS}</green> | <level>{level: <8}</level> | "
    "<cyan>{name}</cyan>:<cyan>{function}</cyan>:<cyan>{line}</cyan> - <level>{message}</level>"
)


def setup_logging(verbosity: int = 0, log_file: Optional[str] = None):
    """
    Configure loguru sinks.

    Args:
        verbosity: 0 for warnings only, 1 for progress (INFO), 2+ for DEBUG
        log_file: Optional file receiving DEBUG output
    """
    # Remove default handler
    logger.remove()
    level = "WARNING" if verbosity <= 0 else "INFO" if verbosity == 1 else "DEBUG"
    logger.add(sys.stderr, level=level, format=LOG_FORMAT)
    if log_file:
        logger.add(log_file, level="DEBUG")
        logger.info(f"Logging to {log_file}")


def _csv_ints(value: str) -> list[int]:
    try:
        return [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{value}'")


def _csv_estimators(value: str) -> list[str]:
    names = [part.strip() for part in value.split(",") if part.strip()]
    unknown = [n for n in names if n not in ESTIMATOR_NAMES]
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown estimator(s) {', '.join(unknown)}; choose from {', '.join(ESTIMATOR_NAMES)}"
        )
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="uwb-reloc",
        description="UWB relative localization simulator: baseline vs. EKF estimators",
    )
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug"
    )
    parser.add_argument("--log-file", help="Also write DEBUG logs to this file")
    parser.add_argument("--config", help="Simulation configuration JSON file")

    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_options(p: argparse.ArgumentParser):
        p.add_argument("--seed", type=int, help="Master seed (default from config)")
        p.add_argument(
            "--estimators", type=_csv_estimators, help="Comma-separated estimators to score"
        )
        p.add_argument("--noiseless", action="store_true", help="Disable all measurement noise")
        p.add_argument("--output", help="Output directory (default $UWB_RELOC_OUTPUT or ./results)")
        p.add_argument("--force", action="store_true", help="Overwrite existing reports")

    run = sub.add_parser("run", help="Simulate one scenario at one sweep point")
    run.add_argument("--scenario", required=True, help="Scenario id (see 'scenarios')")
    run.add_argument("--sweep-index", type=int, default=0, help="Sweep point, 0-based")
    run.add_argument("--divisor", type=int, default=1, help="Robot-B data-rate divisor (1-10)")
    add_run_options(run)

    batch = sub.add_parser("batch", help="Run every scenario and sweep point")
    batch.add_argument("--divisors", type=_csv_ints, help="Comma-separated divisors, e.g. 1,10")
    batch.add_argument("--jobs", type=int, help="Worker processes")
    batch.add_argument(
        "--trajectories", action="store_true", help="Also write per-run trajectory CSVs"
    )
    add_run_options(batch)

    report = sub.add_parser("report", help="Rebuild the report from a records JSON")
    report.add_argument("--records", required=True, help="records.json written by 'batch'")
    report.add_argument("--output", help="Output directory (default: next to the records)")
    report.add_argument("--force", action="store_true", help="Overwrite existing reports")

    scenarios = sub.add_parser("scenarios", help="List the scenario catalog")
    scenarios.add_argument("--dump", help="Write the catalog as JSON to this file")

    calibration = sub.add_parser("calibration", help="Dump or validate calibration tables")
    group = calibration.add_mutually_exclusive_group(required=True)
    group.add_argument("--dump", help="Write the default calibration as JSON to this file")
    group.add_argument("--check", help="Validate a calibration JSON file")
    return parser


def load_config(args: argparse.Namespace) -> SimulationConfig:
    """Configuration from --config with command-line overrides applied."""
    config = SimulationConfig.load_from_file(args.config) if args.config else SimulationConfig()
    try:
        if getattr(args, "seed", None) is not None:
            config.harness.master_seed = args.seed
        if getattr(args, "estimators", None):
            config.harness.estimators = args.estimators
        if getattr(args, "divisors", None):
            config.harness.divisors = args.divisors
        if getattr(args, "jobs", None) is not None:
            config.harness.jobs = args.jobs
        if getattr(args, "noiseless", False):
            config.sensor.noise_enabled = False
    except ValidationError as e:
        raise ConfigurationError(e.errors()[0]["msg"]) from e
    return config


def cmd_run(args: argparse.Namespace) -> int:
    """Simulate one run and write run.json, records.csv and trajectory CSVs."""
    config = load_config(args)
    scenarios = load_scenarios(config.harness.scenarios_file)
    try:
        cfg = RunConfig(
            scenario_id=args.scenario,
            sweep_index=args.sweep_index,
            divisors=[args.divisor],
            estimators=config.harness.estimators,
            master_seed=config.harness.master_seed,
        )
    except ValidationError as e:
        raise ConfigurationError(e.errors()[0]["msg"]) from e

    out = resolve_output_dir(args.output)
    prepare_output_dir(out, [RUN_FILE, RECORDS_FILE], force=args.force)
    record = run_one(cfg, config, scenarios, trajectory_dir=out / TRAJECTORY_DIR)
    write_run_json(out / RUN_FILE, record)
    write_records_csv(out / RECORDS_FILE, [record])

    rows = [
        [
            s.estimator,
            "-" if s.data_rate_divisor is None else s.data_rate_divisor,
            f"{s.rmse_angle_deg:.4f}",
            f"{s.rmse_distance_m:.4f}",
            s.skipped_updates,
        ]
        for s in record.scores
    ]
    print(
        tabulate(
            rows,
            headers=["estimator", "divisor", "RMSE angle (deg)", "RMSE distance (m)", "skipped"],
        )
    )
    return EXIT_OK


def _write_report(out: Path, records: list[RunRecord]) -> None:
    if not records:
        logger.error("No successful runs; no report written")
        return
    report = compare_report(records)
    write_report(out, report)
    print(format_report(report), end="")


def cmd_batch(args: argparse.Namespace) -> int:
    """Run the whole protocol and write records and reports."""
    config = load_config(args)
    scenarios = load_scenarios(config.harness.scenarios_file)
    out = resolve_output_dir(args.output)
    prepare_output_dir(
        out,
        [RECORDS_FILE, RECORDS_JSON_FILE, REPORT_JSON_FILE, REPORT_TEXT_FILE, BOXPLOT_FILE],
        force=args.force,
    )

    configs = batch_configs(scenarios, config)
    result = run_batch(
        configs,
        config,
        scenarios,
        trajectory_dir=out / TRAJECTORY_DIR if args.trajectories else None,
    )
    write_records_csv(out / RECORDS_FILE, result.records)
    write_records_json(out / RECORDS_JSON_FILE, result.records)
    _write_report(out, result.records)

    if result.failures:
        for cfg, message in result.failures:
            logger.error(f"Failed: {cfg.scenario_id}[{cfg.sweep_index}]: {message}")
        return EXIT_PARTIAL_FAILURE
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    """Recompute the comparison report from a records JSON."""
    path = Path(args.records)
    try:
        payload = json.loads(path.read_text())
        records = [RunRecord.model_validate(r) for r in payload["records"]]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValidationError) as e:
        raise ConfigurationError(f"Cannot read run records {path}: {e}") from e

    out = Path(args.output) if args.output else path.parent
    prepare_output_dir(out, [REPORT_JSON_FILE, REPORT_TEXT_FILE, BOXPLOT_FILE], force=args.force)
    _write_report(out, records)
    return EXIT_OK


def cmd_scenarios(args: argparse.Namespace) -> int:
    """List scenarios with their sweep parameter and range."""
    config = load_config(args)
    scenarios = load_scenarios(config.harness.scenarios_file)
    rows = [
        [
            i + 1,
            s.id,
            s.sweep.name,
            f"{s.sweep.points[0].value:g} .. {s.sweep.points[-1].value:g}",
            len(s.sweep.points),
            s.description,
        ]
        for i, s in enumerate(scenarios)
    ]
    print(tabulate(rows, headers=["#", "id", "sweep", "values", "points", "description"]))
    if args.dump:
        save_catalog(scenarios, args.dump)
    return EXIT_OK


def cmd_calibration(args: argparse.Namespace) -> int:
    """Dump the configured calibration or check a calibration file."""
    if args.dump:
        config = load_config(args)
        s = config.sensor
        calibration = (
            load_calibration(s.calibration_file)
            if s.calibration_file
            else default_calibration(
                sigma_min=s.sigma_min,
                sigma_max=s.sigma_max,
                wrap_probability_max=s.wrap_probability_max,
            )
        )
        save_calibration(calibration, args.dump)
        print(f"Calibration written to {args.dump}")
        return EXIT_OK

    calibration = load_calibration(args.check)
    bins = calibration.dispersion.bin_count
    print(f"{args.check}: OK ({len(calibration.pairs)} pairs, {bins} dispersion bins)")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "batch": cmd_batch,
    "report": cmd_report,
    "scenarios": cmd_scenarios,
    "calibration": cmd_calibration,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE

    setup_logging(args.verbose, args.log_file)
    try:
        return COMMANDS[args.command](args)
    except RelLocError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
