"""Files written by the suite: trajectories, run records, reports and boxplot data.

Every CSV has a frozen header (see config.constants). JSON documents carry
schema_version.
"""

import csv
import json
import os
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

from loguru import logger
from tabulate import tabulate

from src.config.constants import (
    BOXPLOT_CSV_COLUMNS,
    DEFAULT_OUTPUT_DIR,
    OUTPUT_DIR_ENV_VAR,
    RECORD_CSV_COLUMNS,
    SCHEMA_VERSION,
    TRAJECTORY_CSV_COLUMNS,
)
from src.exceptions import ReportExistsError
from src.kinematics import RelativeState

if TYPE_CHECKING:
    from src.harness import RunRecord
    from src.stats import ComparisonReport

RECORDS_FILE = "records.csv"
REPORT_JSON_FILE = "report.json"
REPORT_TEXT_FILE = "report.txt"
BOXPLOT_FILE = "boxplots.csv"
RUN_FILE = "run.json"
TRAJECTORY_DIR = "trajectories"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def resolve_output_dir(flag: Optional[str] = None) -> Path:
    """Output directory from the flag, else $UWB_RELOC_OUTPUT, else ./results."""
    return Path(flag or os.environ.get(OUTPUT_DIR_ENV_VAR) or DEFAULT_OUTPUT_DIR)


def prepare_output_dir(directory: Path, products: Iterable[str], force: bool = False) -> Path:
    """
    Create the output directory and refuse to clobber existing products.

    Raises:
        ReportExistsError: If one of the product files exists and force is False
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if not force:
        existing = [name for name in products if (directory / name).exists()]
        if existing:
            raise ReportExistsError(
                f"{directory} already holds {', '.join(existing)}; use --force to overwrite"
            )
    return directory


def trajectory_filename(
    scenario_id: str, sweep_index: int, estimator: str, divisor: Optional[int]
) -> str:
    suffix = "" if divisor is None else f"_d{divisor:02d}"
    return f"{scenario_id}_{sweep_index:02d}/trajectory_{estimator}{suffix}.csv"


def write_trajectory_csv(
    path: Path,
    times: Sequence[float],
    truth: Sequence[RelativeState],
    estimates: Sequence[RelativeState],
    case: str,
    divisor: Optional[int],
    seed: int,
) -> None:
    """One row per estimator tick."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TRAJECTORY_CSV_COLUMNS)
        for t, true_state, estimate in zip(times, truth, estimates):
            writer.writerow(
                [
                    f"{t:.3f}",
                    _fmt(true_state.theta_a),
                    _fmt(true_state.r_rel),
                    _fmt(estimate.theta_a),
                    _fmt(estimate.r_rel),
                    case,
                    _fmt(divisor),
                    seed,
                ]
            )
    logger.debug(f"Trajectory written to {path}")


def write_records_csv(path: Path, records: Sequence["RunRecord"]) -> None:
    """Run records, one row per (run, estimator, divisor)."""
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=RECORD_CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for record in records:
            for row in record.rows():
                writer.writerow({k: _fmt(v) for k, v in row.items()})
    logger.info(f"Run records written to {path}")


def write_run_json(path: Path, record: "RunRecord") -> None:
    payload = {"schema_version": SCHEMA_VERSION, **record.model_dump(mode="json")}
    Path(path).write_text(json.dumps(payload, indent=2))


def write_records_json(path: Path, records: Sequence["RunRecord"]) -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "records": [r.model_dump(mode="json") for r in records],
    }
    Path(path).write_text(json.dumps(payload, indent=2))


def write_report_json(path: Path, report: "ComparisonReport") -> None:
    payload = {
        "schema_version": SCHEMA_VERSION,
        "skipped_fraction": report.health.skipped_fraction,
        **report.model_dump(mode="json"),
    }
    Path(path).write_text(json.dumps(payload, indent=2))
    logger.info(f"Report written to {path}")


def write_boxplot_csv(path: Path, report: "ComparisonReport") -> None:
    """Boxplot summaries for external plotting; outliers are ';'-separated."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(BOXPLOT_CSV_COLUMNS)
        for entry in report.boxplots:
            s = entry.summary
            writer.writerow(
                [
                    entry.estimator,
                    entry.metric,
                    _fmt(entry.data_rate_divisor),
                    s.n,
                    _fmt(s.median),
                    _fmt(s.q1),
                    _fmt(s.q3),
                    _fmt(s.whisker_low),
                    _fmt(s.whisker_high),
                    ";".join(_fmt(v) for v in s.outliers),
                ]
            )
    logger.info(f"Boxplot summaries written to {path}")


def _rate_label(report: "ComparisonReport", divisor: int) -> str:
    rate = report.effective_rate
    return f"{rate / divisor:.2f} Hz" if rate else f"/{divisor}"


def _median_rows(report: "ComparisonReport") -> list[list[str]]:
    medians = {(m.estimator, m.metric, m.data_rate_divisor): m.median for m in report.medians}
    series = [("baseline", None), ("ekf_case2", None)]
    series += [("ekf_case1", d) for d in report.divisors]
    rows = []
    for metric, unit in (("angle", "deg"), ("distance", "m")):
        for estimator, divisor in series:
            median = medians.get((estimator, metric, divisor))
            if median is None:
                continue
            rate = "-" if divisor is None else _rate_label(report, divisor)
            rows.append([estimator, metric, rate, f"{median:.4f} {unit}"])
    return rows


def _p_value_rows(report: "ComparisonReport") -> list[list[str]]:
    entries = {(c.challenger, c.metric, c.data_rate_divisor): c for c in report.comparisons}
    rows = []
    for d in report.divisors or [None]:
        row = ["-" if d is None else _rate_label(report, d)]
        # Case 2 ignores robot-B data, so its p-values repeat on every row
        for challenger, divisor in (("ekf_case1", d), ("ekf_case2", None)):
            for metric in ("distance", "angle"):
                c = entries.get((challenger, metric, divisor))
                if c is None:
                    row.append("")
                else:
                    row.append(f"{c.result.p_value:.3g}{'*' if c.significant else ''}")
        rows.append(row)
    return rows


def format_report(report: "ComparisonReport") -> str:
    """Aligned text tables: medians, p-values, short-range split and filter health."""
    sections = [
        f"Median RMSE over {report.runs} runs",
        tabulate(
            _median_rows(report),
            headers=["estimator", "metric", "robot-B rate", "median"],
            tablefmt="simple",
        ),
    ]

    if report.comparisons:
        sections += [
            "",
            f"Wilcoxon signed-rank p-values against the baseline "
            f"(* p < {report.significance_level}; exact up to n = {report.exact_wilcoxon_max_n})",
            tabulate(
                _p_value_rows(report),
                headers=["robot-B rate", "case1 dist", "case1 angle", "case2 dist", "case2 angle"],
                tablefmt="simple",
            ),
        ]

    rows = [
        [
            s.estimator + ("" if s.data_rate_divisor is None else f" /{s.data_rate_divisor}"),
            s.metric,
            s.short_range_runs,
            "-" if s.short_range_median is None else f"{s.short_range_median:.4f}",
            s.other_runs,
            "-" if s.other_median is None else f"{s.other_median:.4f}",
        ]
        for s in report.short_range
        if s.short_range_runs
    ]
    if rows:
        sections += [
            "",
            "Runs passing closer than 0.3 m",
            tabulate(
                rows,
                headers=["estimator", "metric", "short runs", "median", "other runs", "median"],
                tablefmt="simple",
            ),
        ]

    h = report.health
    sections += [
        "",
        f"Filter health: {h.updates} updates, {h.skipped_updates} skipped "
        f"({h.skipped_fraction:.4%}), {h.psd_violations} PSD violations, "
        f"{h.singular_clamps} range clamps",
    ]
    return "\n".join(sections) + "\n"


def write_report(directory: Path, report: "ComparisonReport") -> None:
    """report.json, report.txt and boxplots.csv in one directory."""
    directory = Path(directory)
    write_report_json(directory / REPORT_JSON_FILE, report)
    write_boxplot_csv(directory / BOXPLOT_FILE, report)
    (directory / REPORT_TEXT_FILE).write_text(format_report(report))
