"""RMSE, boxplot summaries, the Wilcoxon signed-rank test and estimator comparison."""

import math
from collections import defaultdict
from typing import TYPE_CHECKING, Literal, Optional, Sequence

import numpy as np
import scipy.stats
from loguru import logger
from pydantic import BaseModel, Field

from src.config.constants import (
    EXACT_WILCOXON_MAX_N,
    SIGNIFICANCE_LEVEL,
    SHORT_RANGE_THRESHOLD,
    WHISKER_IQR_FACTOR,
)
from src.exceptions import DomainError, PairingError

if TYPE_CHECKING:
    from src.harness import RunRecord

Metric = Literal["angle", "distance"]
METRICS: tuple[Metric, Metric] = ("angle", "distance")
MIN_PAIRED_SAMPLES = 5


def rmse(errors: Sequence[float]) -> float:
    """
    Root-mean-square of already-signed errors (wrap angle errors first).

    Raises:
        DomainError: If errors is empty or not finite
    """
    values = np.asarray(errors, dtype=float)
    if values.size == 0:
        raise DomainError("rmse of an empty sequence")
    if not np.all(np.isfinite(values)):
        raise DomainError("rmse of non-finite errors")
    return float(np.sqrt(np.mean(values**2)))


class BoxplotSummary(BaseModel):
    n: int
    median: float
    q1: float
    q3: float
    whisker_low: float
    whisker_high: float
    outliers: list[float] = Field(default_factory=list)


def boxplot_summary(values: Sequence[float], whis: float = WHISKER_IQR_FACTOR) -> BoxplotSummary:
    """
    Five-number summary with linear-interpolation quartiles.

    Whiskers reach the most extreme sample within whis * IQR of the box and
    never fall inside the box; samples beyond them are outliers.

    Raises:
        DomainError: If values is empty
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise DomainError("boxplot of an empty sequence")

    q1, median, q3 = np.percentile(x, [25, 50, 75], method="linear")
    iqr = q3 - q1
    low_fence, high_fence = q1 - whis * iqr, q3 + whis * iqr

    inside = x[x <= high_fence]
    whisker_high = q3 if inside.size == 0 else max(float(np.max(inside)), q3)
    inside = x[x >= low_fence]
    whisker_low = q1 if inside.size == 0 else min(float(np.min(inside)), q1)

    outliers = sorted(float(v) for v in x if v < low_fence or v > high_fence)
    return BoxplotSummary(
        n=int(x.size),
        median=float(median),
        q1=float(q1),
        q3=float(q3),
        whisker_low=float(whisker_low),
        whisker_high=float(whisker_high),
        outliers=outliers,
    )


class WilcoxonResult(BaseModel):
    n_effective: int
    statistic: float
    p_value: float = Field(ge=0, le=1)
    method: Literal["exact", "normal-approximation"]
    degenerate: bool = False


def _exact_p_value(doubled_ranks: np.ndarray, doubled_w_plus: int) -> float:
    """
    Two-sided exact p-value by enumerating all sign assignments.

    Ranks are doubled so tied (half-integer) ranks stay integers; the count of
    sign assignments per rank sum comes from a subset-sum recurrence.
    """
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled_ranks.astype(int):
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    deviations = np.abs(2 * np.arange(total + 1) - total)
    observed = abs(2 * doubled_w_plus - total)
    p = counts[deviations >= observed].sum() / 2.0 ** len(doubled_ranks)
    return float(min(p, 1.0))


def wilcoxon_signed_rank(
    paired_a: Sequence[float],
    paired_b: Sequence[float],
    exact_max_n: int = EXACT_WILCOXON_MAX_N,
) -> WilcoxonResult:
    """
    Two-sided Wilcoxon signed-rank test of paired samples.

    Zero differences are dropped, ties get average ranks and W = min(W+, W-).
    Up to exact_max_n effective pairs the p-value is exact; beyond that the
    normal approximation with tie-corrected variance and continuity
    correction is used.

    Raises:
        DomainError: If the samples differ in length or have fewer than five pairs
    """
    a = np.asarray(paired_a, dtype=float)
    b = np.asarray(paired_b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"paired samples differ in length: {a.size} vs {b.size}")
    if a.size < MIN_PAIRED_SAMPLES:
        raise DomainError(f"at least {MIN_PAIRED_SAMPLES} pairs required, got {a.size}")

    d = a - b
    d = d[d != 0]
    n = int(d.size)
    if n == 0:
        return WilcoxonResult(
            n_effective=0, statistic=0.0, p_value=1.0, method="exact", degenerate=True
        )

    ranks = scipy.stats.rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    statistic = min(w_plus, w_minus)

    if n <= exact_max_n:
        doubled = np.rint(2 * ranks).astype(int)
        p = _exact_p_value(doubled, int(round(2 * w_plus)))
        return WilcoxonResult(n_effective=n, statistic=statistic, p_value=p, method="exact")

    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d), return_counts=True)
    variance = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    z = max(abs(statistic - mean) - 0.5, 0.0) / math.sqrt(variance)
    p = float(min(2.0 * scipy.stats.norm.sf(z), 1.0))
    return WilcoxonResult(
        n_effective=n, statistic=statistic, p_value=p, method="normal-approximation"
    )


# Comparison report ----------------------------------------------------------


class MedianEntry(BaseModel):
    estimator: str
    metric: Metric
    data_rate_divisor: Optional[int] = None
    n: int
    median: float


class BoxplotEntry(BaseModel):
    estimator: str
    metric: Metric
    data_rate_divisor: Optional[int] = None
    summary: BoxplotSummary


class ComparisonEntry(BaseModel):
    """Baseline against one filter, one metric, one divisor (None for Case 2)."""

    challenger: str
    metric: Metric
    data_rate_divisor: Optional[int] = None
    result: WilcoxonResult
    significant: bool


class ShortRangeEntry(BaseModel):
    estimator: str
    metric: Metric
    data_rate_divisor: Optional[int] = None
    short_range_runs: int
    short_range_median: Optional[float] = None
    other_runs: int
    other_median: Optional[float] = None


class HealthSummary(BaseModel):
    updates: int = 0
    skipped_updates: int = 0
    psd_violations: int = 0
    singular_clamps: int = 0

    @property
    def skipped_fraction(self) -> float:
        return self.skipped_updates / self.updates if self.updates else 0.0


class ComparisonReport(BaseModel):
    runs: int
    effective_rate: Optional[float] = None
    exact_wilcoxon_max_n: int = EXACT_WILCOXON_MAX_N
    significance_level: float = SIGNIFICANCE_LEVEL
    divisors: list[int]
    medians: list[MedianEntry]
    boxplots: list[BoxplotEntry]
    comparisons: list[ComparisonEntry]
    short_range: list[ShortRangeEntry]
    health: HealthSummary


SeriesKey = tuple[str, Optional[int]]
PairKey = tuple[str, int, int]


def _metric_value(score, metric: Metric) -> float:
    return score.rmse_angle_deg if metric == "angle" else score.rmse_distance_m


def _collect(records: Sequence["RunRecord"]) -> dict[SeriesKey, dict[PairKey, tuple]]:
    """Scores grouped by (estimator, divisor), keyed by (scenario, sweep index, seed)."""
    series: dict[SeriesKey, dict[PairKey, tuple]] = defaultdict(dict)
    for record in records:
        pair_key = (record.scenario, record.sweep_index, record.seed)
        for score in record.scores:
            key = (score.estimator, score.data_rate_divisor)
            if pair_key in series[key]:
                raise PairingError(f"duplicate run {pair_key} for {key[0]}")
            series[key][pair_key] = (score, record.min_range_m)
    return series


def _series_order(key: SeriesKey) -> tuple:
    order = {"baseline": 0, "ekf_case1": 1, "ekf_case2": 2}
    return (order.get(key[0], 9), key[1] or 0)


def _paired(
    base: dict[PairKey, tuple], other: dict[PairKey, tuple], label: str
) -> list[PairKey]:
    if base.keys() != other.keys():
        missing = sorted(base.keys() ^ other.keys())[:3]
        raise PairingError(f"run sets differ for {label}, e.g. {missing}")
    return sorted(base)


def compare_report(records: Sequence["RunRecord"]) -> ComparisonReport:
    """
    Medians, boxplots and Wilcoxon p-values of every estimator against the baseline.

    Runs are paired by (scenario, sweep index, seed).

    Raises:
        PairingError: If estimators were scored on different run sets
        DomainError: If records is empty
    """
    if not records:
        raise DomainError("no run records to compare")
    series = _collect(records)
    keys = sorted(series, key=_series_order)
    divisors = sorted({d for _, d in keys if d is not None})

    medians, boxplots, short_range = [], [], []
    health = HealthSummary()
    for key in keys:
        estimator, divisor = key
        entries = [series[key][k] for k in sorted(series[key])]
        for score, _ in entries:
            health.updates += score.updates
            health.skipped_updates += score.skipped_updates
            health.psd_violations += score.psd_violations
            health.singular_clamps += score.singular_clamps
        for metric in METRICS:
            values = [_metric_value(s, metric) for s, _ in entries]
            summary = boxplot_summary(values)
            medians.append(
                MedianEntry(
                    estimator=estimator,
                    metric=metric,
                    data_rate_divisor=divisor,
                    n=len(values),
                    median=summary.median,
                )
            )
            boxplots.append(
                BoxplotEntry(
                    estimator=estimator, metric=metric, data_rate_divisor=divisor, summary=summary
                )
            )
            short = [_metric_value(s, metric) for s, r in entries if r < SHORT_RANGE_THRESHOLD]
            other = [_metric_value(s, metric) for s, r in entries if r >= SHORT_RANGE_THRESHOLD]
            short_range.append(
                ShortRangeEntry(
                    estimator=estimator,
                    metric=metric,
                    data_rate_divisor=divisor,
                    short_range_runs=len(short),
                    short_range_median=float(np.median(short)) if short else None,
                    other_runs=len(other),
                    other_median=float(np.median(other)) if other else None,
                )
            )

    comparisons = []
    base_key = ("baseline", None)
    if base_key in series:
        base = series[base_key]
        for key in keys:
            if key == base_key:
                continue
            label = f"baseline vs {key[0]}" + (f" (divisor {key[1]})" if key[1] else "")
            pair_keys = _paired(base, series[key], label)
            if len(pair_keys) < MIN_PAIRED_SAMPLES:
                logger.warning(f"{label}: only {len(pair_keys)} paired runs, test skipped")
                continue
            for metric in METRICS:
                result = wilcoxon_signed_rank(
                    [_metric_value(base[k][0], metric) for k in pair_keys],
                    [_metric_value(series[key][k][0], metric) for k in pair_keys],
                )
                comparisons.append(
                    ComparisonEntry(
                        challenger=key[0],
                        metric=metric,
                        data_rate_divisor=key[1],
                        result=result,
                        significant=result.p_value < SIGNIFICANCE_LEVEL,
                    )
                )

    rates = {round(r.effective_rate, 6) for r in records}
    return ComparisonReport(
        runs=len(records),
        effective_rate=rates.pop() if len(rates) == 1 else None,
        divisors=divisors,
        medians=medians,
        boxplots=boxplots,
        comparisons=comparisons,
        short_range=short_range,
        health=health,
    )
