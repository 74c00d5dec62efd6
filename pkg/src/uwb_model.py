"""Synthetic UWB telemetry: two-way-ranging distance and three PDoA angles.

Each of the three antenna pairs sees the other robot at a pair-local angle
theta_loc = theta_a - offset. A pair cannot tell the front of its baseline from
the back: its reading follows a rising calibration slope over the front half
and a falling slope over the back half, both spanning [-90, 90]. Readings are
reported as global-frame angles offset + reading, i.e. read through the rising
slope. Noise grows toward the +/-90 extremities where readings can also jump to
the opposite extremity (wrap events).
"""

import json
import math
from pathlib import Path
from typing import Literal, NamedTuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, ValidationError

from src.config.constants import (
    ANTENNA_SPACING,
    DISPERSION_BIN_WIDTH_DEG,
    DISTANCE_NOISE_STD,
    LOW_CERTAINTY,
    NOISELESS_ANGLE_STD,
    NOISELESS_DISTANCE_STD,
    PAIR_OFFSETS_DEG,
    R_MIN,
    SCHEMA_VERSION,
    SIGMA_MAX_DEG,
    SIGMA_MIN_DEG,
    WRAP_ONSET_DEG,
    WRAP_PROBABILITY_CEILING,
    WRAP_PROBABILITY_MAX,
)
from src.exceptions import CalibrationError
from src.geometry import AngleDeg, angle_diff_deg, wrap_deg
from src.kinematics import RelativeState

SlopeName = Literal["rising", "falling"]
SLOPES: tuple[SlopeName, SlopeName] = ("rising", "falling")
CertaintyMode = Literal["normalized", "unnormalized"]


class SlopeCalibration(BaseModel):
    """Linear calibration reading = slope * theta_loc + intercept over valid_range."""

    slope: float = Field(description="A coefficient (reading degrees per degree)")
    intercept: float = Field(description="B coefficient (degrees)")
    valid_range: tuple[float, float] = Field(
        description="Pair-local angle interval [lo, hi] covered by this slope"
    )

    def reading(self, theta_loc: float) -> float:
        """Reading produced at a pair-local angle, mapped into the valid range."""
        return self.slope * self.represent(theta_loc) + self.intercept

    def represent(self, theta_loc: float) -> float:
        """Express a pair-local angle inside a 360 deg window centred on the range."""
        centre = 0.5 * (self.valid_range[0] + self.valid_range[1])
        return centre + angle_diff_deg(theta_loc, centre)

    def contains(self, theta_loc: float) -> bool:
        lo, hi = self.valid_range
        return lo <= self.represent(theta_loc) <= hi

    def reading_span(self) -> tuple[float, float]:
        """Interval of readings the slope can produce."""
        a = self.slope * self.valid_range[0] + self.intercept
        b = self.slope * self.valid_range[1] + self.intercept
        return (min(a, b), max(a, b))

    def invert(self, reading: float) -> float:
        return (reading - self.intercept) / self.slope


class PairCalibration(BaseModel):
    """Rising and falling calibration slopes of one antenna pair."""

    pair_id: int = Field(ge=1, le=3, description="Antenna pair number")
    orientation_offset: float = Field(
        description="Direction of the pair's baseline normal in robot A's frame (degrees)"
    )
    rising: SlopeCalibration
    falling: SlopeCalibration

    def slope(self, name: SlopeName) -> SlopeCalibration:
        return self.rising if name == "rising" else self.falling


class DispersionBin(BaseModel):
    """Noise of a pair's reading for real angles falling in one bin."""

    mean_offset: float = Field(default=0.0, description="Bias of the reading (degrees)")
    std_dev: float = Field(description="Standard deviation of the reading (degrees)")
    wrap_probability: float = Field(
        default=0.0, description="Probability of a jump to the opposite extremity"
    )


class PairDispersion(BaseModel):
    pair_id: int = Field(ge=1, le=3)
    bins: list[DispersionBin]


class DispersionTable(BaseModel):
    """Per-pair dispersion bins indexed by the real angle theta_a in [0, 360)."""

    bin_width: float = Field(default=DISPERSION_BIN_WIDTH_DEG, gt=0)
    pairs: list[PairDispersion]

    @property
    def bin_count(self) -> int:
        return math.ceil(360.0 / self.bin_width - 1e-9)

    def bin_index(self, theta: AngleDeg) -> int:
        return min(int(wrap_deg(theta) // self.bin_width), self.bin_count - 1)

    def bin_centre(self, index: int) -> float:
        lo = index * self.bin_width
        return lo + 0.5 * min(self.bin_width, 360.0 - lo)


class CalibrationSet(BaseModel):
    """Calibration slopes and dispersion tables of the three antenna pairs."""

    schema_version: int = Field(default=SCHEMA_VERSION)
    antenna_spacing: float = Field(
        default=ANTENNA_SPACING, gt=0, description="Antenna spacing (meters)"
    )
    pairs: list[PairCalibration]
    dispersion: DispersionTable


class MeasurementVector(NamedTuple):
    """Three per-pair angles (degrees, global frame) and one distance (meters)."""

    pdoa_angles: tuple[AngleDeg, AngleDeg, AngleDeg]
    distance: float


class Candidate(NamedTuple):
    """One possible relative angle obtained by inverting a calibration slope."""

    pair_index: int
    slope: SlopeName
    angle: AngleDeg
    certainty: float
    clamped: bool
    reading_certainty: float


def _default_slopes(offset: float, pair_id: int) -> PairCalibration:
    return PairCalibration(
        pair_id=pair_id,
        orientation_offset=offset,
        rising=SlopeCalibration(slope=1.0, intercept=0.0, valid_range=(-90.0, 90.0)),
        falling=SlopeCalibration(slope=-1.0, intercept=180.0, valid_range=(90.0, 270.0)),
    )


def default_calibration(
    sigma_min: float = SIGMA_MIN_DEG,
    sigma_max: float = SIGMA_MAX_DEG,
    wrap_probability_max: float = WRAP_PROBABILITY_MAX,
    bin_width: float = DISPERSION_BIN_WIDTH_DEG,
    offsets: tuple[float, float, float] = PAIR_OFFSETS_DEG,
) -> CalibrationSet:
    """
    Build the synthetic calibration of a symmetric three-antenna assembly.

    sigma(theta_loc) = sigma_min + (sigma_max - sigma_min) * |sin theta_loc|^3
    wrap(theta_loc) rises quadratically from 0 at |theta_loc| = 60 deg to
    wrap_probability_max at the +/-90 deg extremities.

    Args:
        sigma_min: Standard deviation facing the pair (degrees)
        sigma_max: Standard deviation at the extremities (degrees)
        wrap_probability_max: Wrap probability at the extremities
        bin_width: Width of the dispersion bins (degrees)
        offsets: Baseline normal of pairs 1, 2 and 3 (degrees)

    Returns:
        Calibration set with three pairs and their dispersion tables
    """
    pairs = [_default_slopes(offset, i + 1) for i, offset in enumerate(offsets)]
    table = DispersionTable(bin_width=bin_width, pairs=[])
    onset = math.sin(math.radians(WRAP_ONSET_DEG))
    for pair in pairs:
        bins = []
        for index in range(table.bin_count):
            theta_loc = angle_diff_deg(table.bin_centre(index), pair.orientation_offset)
            s = abs(math.sin(math.radians(theta_loc)))
            ramp = min(max((s - onset) / (1.0 - onset), 0.0), 1.0)
            bins.append(
                DispersionBin(
                    mean_offset=0.0,
                    std_dev=sigma_min + (sigma_max - sigma_min) * s**3,
                    wrap_probability=wrap_probability_max * ramp**2,
                )
            )
        table.pairs.append(PairDispersion(pair_id=pair.pair_id, bins=bins))
    return CalibrationSet(pairs=pairs, dispersion=table)


def check_calibration(cal: CalibrationSet) -> None:
    """
    Validate the semantic invariants of a calibration set.

    Raises:
        CalibrationError: Naming the pair, bin and location of the first problem
    """
    ids = sorted(p.pair_id for p in cal.pairs)
    if ids != [1, 2, 3]:
        raise CalibrationError(f"Expected pairs 1, 2, 3, got {ids}", location="pairs")
    for i, pair in enumerate(cal.pairs):
        where = f"pairs[{i}]"
        if pair.rising.slope <= 0:
            raise CalibrationError(
                f"Pair {pair.pair_id}: rising slope must be positive, got {pair.rising.slope}",
                pair_id=pair.pair_id,
                location=f"{where}.rising.slope",
            )
        if pair.falling.slope >= 0:
            raise CalibrationError(
                f"Pair {pair.pair_id}: falling slope must be negative, got {pair.falling.slope}",
                pair_id=pair.pair_id,
                location=f"{where}.falling.slope",
            )
        r_lo, r_hi = pair.rising.valid_range
        f_lo, f_hi = pair.falling.valid_range
        if not (r_lo < r_hi and f_lo < f_hi):
            raise CalibrationError(
                f"Pair {pair.pair_id}: valid ranges must be increasing intervals",
                pair_id=pair.pair_id,
                location=f"{where}.valid_range",
            )
        if abs(r_hi - f_lo) > 1e-9 or abs((f_hi - r_lo) - 360.0) > 1e-9:
            raise CalibrationError(
                f"Pair {pair.pair_id}: rising {pair.rising.valid_range} and falling "
                f"{pair.falling.valid_range} must tile a full turn",
                pair_id=pair.pair_id,
                location=f"{where}.valid_range",
            )

    table = cal.dispersion
    dispersion_ids = sorted(p.pair_id for p in table.pairs)
    if dispersion_ids != [1, 2, 3]:
        raise CalibrationError(
            f"Dispersion table must cover pairs 1, 2, 3, got {dispersion_ids}",
            location="dispersion.pairs",
        )
    for i, pair in enumerate(table.pairs):
        if len(pair.bins) != table.bin_count:
            raise CalibrationError(
                f"Pair {pair.pair_id}: expected {table.bin_count} bins of "
                f"{table.bin_width} deg, got {len(pair.bins)}",
                pair_id=pair.pair_id,
                location=f"dispersion.pairs[{i}].bins",
            )
        for j, b in enumerate(pair.bins):
            where = f"dispersion.pairs[{i}].bins[{j}]"
            if not b.std_dev > 0:
                raise CalibrationError(
                    f"Pair {pair.pair_id}, bin {j}: std_dev must be > 0, got {b.std_dev}",
                    pair_id=pair.pair_id,
                    bin_index=j,
                    location=f"{where}.std_dev",
                )
            if not 0.0 <= b.wrap_probability <= WRAP_PROBABILITY_CEILING:
                raise CalibrationError(
                    f"Pair {pair.pair_id}, bin {j}: wrap_probability must be in "
                    f"[0, {WRAP_PROBABILITY_CEILING}], got {b.wrap_probability}",
                    pair_id=pair.pair_id,
                    bin_index=j,
                    location=f"{where}.wrap_probability",
                )


def save_calibration(cal: CalibrationSet, filepath: str | Path) -> None:
    """Write a calibration set as indented JSON."""
    Path(filepath).write_text(cal.model_dump_json(indent=2))
    logger.info(f"Calibration saved to {filepath}")


def load_calibration(filepath: str | Path) -> CalibrationSet:
    """
    Load and validate a calibration JSON document.

    Raises:
        CalibrationError: On unreadable JSON, schema violations or broken invariants
    """
    try:
        data = json.loads(Path(filepath).read_text())
    except json.JSONDecodeError as e:
        raise CalibrationError(
            f"{filepath}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}",
            location=f"line {e.lineno}",
        ) from e
    except OSError as e:
        raise CalibrationError(f"Cannot read calibration file {filepath}: {e}") from e

    try:
        cal = CalibrationSet.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise CalibrationError(
            f"{filepath}: {location}: {first['msg']}", location=location
        ) from e

    if cal.schema_version != SCHEMA_VERSION:
        raise CalibrationError(
            f"{filepath}: unsupported schema_version {cal.schema_version}",
            location="schema_version",
        )
    check_calibration(cal)
    logger.debug(f"Calibration loaded from {filepath}")
    return cal


class SensorModel:
    """Calibration compiled into lookup arrays plus the noise switches of a run.

    Immutable after construction; safe to share between threads.
    """

    def __init__(
        self,
        calibration: CalibrationSet | None = None,
        noise_enabled: bool = True,
        distance_std: float = DISTANCE_NOISE_STD,
    ):
        """
        Args:
            calibration: Calibration set, default_calibration() if None
            noise_enabled: If False every reading is exact
            distance_std: Distance noise standard deviation (meters)
        """
        self.calibration = calibration or default_calibration()
        check_calibration(self.calibration)
        self.noise_enabled = noise_enabled
        self.distance_std = distance_std

        self.pairs = sorted(self.calibration.pairs, key=lambda p: p.pair_id)
        self.offsets = tuple(p.orientation_offset for p in self.pairs)
        table = self.calibration.dispersion
        self.table = table
        by_id = {p.pair_id: p for p in table.pairs}
        ordered = [by_id[p.pair_id].bins for p in self.pairs]
        self._std = np.array([[b.std_dev for b in bins] for bins in ordered])
        self._bias = np.array([[b.mean_offset for b in bins] for bins in ordered])
        self._wrap = np.array([[b.wrap_probability for b in bins] for bins in ordered])
        self.sigma_min = float(self._std.min())

    def angle_std(self, pair_index: int, theta: AngleDeg) -> float:
        return float(self._std[pair_index, self.table.bin_index(theta)])

    def angle_bias(self, pair_index: int, theta: AngleDeg) -> float:
        return float(self._bias[pair_index, self.table.bin_index(theta)])

    def wrap_probability(self, pair_index: int, theta: AngleDeg) -> float:
        return float(self._wrap[pair_index, self.table.bin_index(theta)])

    def filter_angle_variance(self, pair_index: int, theta: AngleDeg) -> float:
        """Reading variance an estimator should assume at an estimated angle."""
        if not self.noise_enabled:
            return NOISELESS_ANGLE_STD**2
        return self.angle_std(pair_index, theta) ** 2

    def filter_distance_variance(self) -> float:
        if not self.noise_enabled:
            return NOISELESS_DISTANCE_STD**2
        return self.distance_std**2

    def reading_certainty(self, pair_index: int, measured: AngleDeg) -> float:
        """Inverse-dispersion certainty of a reading, in (0, 1]."""
        return min(max(self.sigma_min / self.angle_std(pair_index, measured), 0.0), 1.0)


def pair_reading(
    sensor: SensorModel, pair_index: int, theta_a: AngleDeg
) -> tuple[float, SlopeName]:
    """Noise-free reading of one pair and the slope that produced it."""
    pair = sensor.pairs[pair_index]
    theta_loc = angle_diff_deg(theta_a, pair.orientation_offset)
    name: SlopeName = "rising" if pair.rising.contains(theta_loc) else "falling"
    return pair.slope(name).reading(theta_loc), name


def measure(
    true_state: RelativeState, sensor: SensorModel, rng: np.random.Generator
) -> MeasurementVector:
    """
    Draw one noisy UWB measurement of the true relative state.

    Distance gets unbiased Gaussian noise. Each pair's reading gets the bias and
    standard deviation of the dispersion bin at the real angle, then jumps to
    the opposite extremity with the bin's wrap probability. Draw order is fixed
    (distance, then pairs 1 to 3) so equal seeds give equal sequences.

    Args:
        true_state: Ground-truth relative state
        sensor: Compiled calibration and noise switches
        rng: Private random stream of the run

    Returns:
        Measurement vector with global-frame pair angles
    """
    distance = true_state.r_rel
    if sensor.noise_enabled:
        distance += rng.normal(0.0, sensor.distance_std)
    distance = max(distance, R_MIN)

    angles = []
    for i, offset in enumerate(sensor.offsets):
        reading, _ = pair_reading(sensor, i, true_state.theta_a)
        if sensor.noise_enabled:
            reading += rng.normal(
                sensor.angle_bias(i, true_state.theta_a),
                sensor.angle_std(i, true_state.theta_a),
            )
            if rng.random() < sensor.wrap_probability(i, true_state.theta_a):
                reading -= math.copysign(180.0, reading)
        angles.append(wrap_deg(offset + reading))
    return MeasurementVector((angles[0], angles[1], angles[2]), distance)


def slope_certainties(
    candidates: list[Candidate], sensor: SensorModel, mode: CertaintyMode = "normalized"
) -> list[tuple[float, float]]:
    """
    Certainty of the rising and falling slope of every pair.

    A slope collects the reading certainty of each candidate of the two other
    pairs that falls inside its valid range.

    Returns:
        One (rising, falling) tuple per pair
    """
    result = []
    for i, pair in enumerate(sensor.pairs):
        others = [c for c in candidates if c.pair_index != i]
        support = {name: 0.0 for name in SLOPES}
        for c in others:
            theta_loc = angle_diff_deg(c.angle, pair.orientation_offset)
            for name in SLOPES:
                if pair.slope(name).contains(theta_loc):
                    support[name] += c.reading_certainty
                    break
        if mode == "normalized":
            total = support["rising"] + support["falling"]
            if total > 0:
                result.append((support["rising"] / total, support["falling"] / total))
            else:
                result.append((0.5, 0.5))
        else:
            n = max(len(others), 1)
            result.append((support["rising"] / n, support["falling"] / n))
    return result


def candidate_angles(m: MeasurementVector, sensor: SensorModel) -> list[Candidate]:
    """
    Invert both calibration slopes of every pair at the measured value.

    A reading outside a slope's span is clamped to the nearest end of the span
    and gets LOW_CERTAINTY. A candidate's certainty is its reading certainty
    scaled by the normalized support the other pairs give its slope, so of two
    mirror candidates the one agreeing with the other pairs is more certain.

    Returns:
        Six candidates, ordered pair 1 rising, pair 1 falling, pair 2 rising, ...
    """
    candidates = []
    for i, pair in enumerate(sensor.pairs):
        measured = m.pdoa_angles[i]
        reading = angle_diff_deg(measured, pair.orientation_offset)
        certainty = sensor.reading_certainty(i, measured)
        for name in SLOPES:
            slope = pair.slope(name)
            lo, hi = slope.reading_span()
            clamped = not lo <= reading <= hi
            value = min(max(reading, lo), hi)
            theta_loc = slope.invert(value)
            reading_certainty = LOW_CERTAINTY if clamped else certainty
            candidates.append(
                Candidate(
                    pair_index=i,
                    slope=name,
                    angle=wrap_deg(pair.orientation_offset + theta_loc),
                    certainty=reading_certainty,
                    clamped=clamped,
                    reading_certainty=reading_certainty,
                )
            )
    support = slope_certainties(candidates, sensor)
    return [
        c._replace(
            certainty=c.reading_certainty * support[c.pair_index][SLOPES.index(c.slope)]
        )
        for c in candidates
    ]
