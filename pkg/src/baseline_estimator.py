"""Slope-selection angle fusion used as the comparison baseline.

Four steps per measurement: (1) six candidate angles with a certainty per
reading, (2) a certainty per calibration slope voted by the other pairs'
candidates, (3) one candidate per pair taken from its more certain slope,
(4) fusion of the two closest candidates, or of all three when no two agree,
followed by an exponential moving average. The distance passes through.
"""

import itertools
from dataclasses import dataclass
from typing import NamedTuple, Optional

from loguru import logger

from src.config.constants import CLOSENESS_THRESHOLD_DEG, EMA_ALPHA
from src.estimator_base import EstimatorTick, RelativeEstimatorBase
from src.exceptions import DomainError
from src.geometry import AngleDeg, angle_diff_deg, circular_mean_deg, wrap_deg
from src.kinematics import RelativeState
from src.uwb_model import (
    Candidate,
    CertaintyMode,
    MeasurementVector,
    SensorModel,
    SlopeName,
    candidate_angles,
    slope_certainties,
)


class SlopeSelection(NamedTuple):
    """Chosen slope of each pair and the (rising, falling) certainty behind it."""

    slopes: tuple[SlopeName, SlopeName, SlopeName]
    certainties: tuple[tuple[float, float], ...]


@dataclass
class BaselineState:
    """Mutable per-run state of the baseline."""

    ema_alpha: float = EMA_ALPHA
    ema_angle: Optional[AngleDeg] = None
    last_distance: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.ema_alpha <= 1.0:
            raise DomainError(f"ema_alpha must be in (0, 1], got {self.ema_alpha}")


def select_slopes(
    candidates: list[Candidate], sensor: SensorModel, mode: CertaintyMode = "normalized"
) -> tuple[SlopeSelection, list[Candidate]]:
    """Pick the candidate on the more certain slope of each pair (rising on ties)."""
    certainties = slope_certainties(candidates, sensor, mode)
    chosen: list[Candidate] = []
    names: list[SlopeName] = []
    for i, (rising, falling) in enumerate(certainties):
        name: SlopeName = "falling" if falling > rising else "rising"
        names.append(name)
        chosen.append(next(c for c in candidates if c.pair_index == i and c.slope == name))
    selection = SlopeSelection((names[0], names[1], names[2]), tuple(certainties))
    return selection, chosen


def fuse_angles(
    angles: list[AngleDeg],
    closeness_threshold: float = CLOSENESS_THRESHOLD_DEG,
    certainties: Optional[list[float]] = None,
) -> AngleDeg:
    """
    Fuse three candidate angles.

    The two closest angles are averaged when they are within the threshold,
    otherwise all three are averaged. Averages are circular.
    """
    i, j = min(
        itertools.combinations(range(len(angles)), 2),
        key=lambda ij: abs(angle_diff_deg(angles[ij[0]], angles[ij[1]])),
    )
    if abs(angle_diff_deg(angles[i], angles[j])) <= closeness_threshold:
        group = [angles[i], angles[j]]
    else:
        group = list(angles)
    try:
        return circular_mean_deg(group)
    except DomainError:
        # evenly spread candidates have no mean direction
        weights = certainties or [1.0] * len(angles)
        best = max(range(len(angles)), key=weights.__getitem__)
        return wrap_deg(angles[best])


def estimate(
    m: MeasurementVector,
    sensor: SensorModel,
    state: BaselineState,
    closeness_threshold: float = CLOSENESS_THRESHOLD_DEG,
    mode: CertaintyMode = "normalized",
) -> tuple[AngleDeg, float, SlopeSelection]:
    """
    Run the four fusion steps and the moving average on one measurement.

    The first call after a reset seeds the average with the fused angle.

    Args:
        m: Measurement of this tick
        sensor: Calibration used to invert readings
        state: Per-run state, updated in place
        closeness_threshold: Agreement threshold of step 4 (degrees)
        mode: Slope certainty normalisation

    Returns:
        (smoothed angle, distance, slope selection)
    """
    candidates = candidate_angles(m, sensor)
    selection, chosen = select_slopes(candidates, sensor, mode)
    fused = fuse_angles(
        [c.angle for c in chosen], closeness_threshold, [c.certainty for c in chosen]
    )

    if state.ema_angle is None:
        state.ema_angle = fused
    else:
        step = state.ema_alpha * angle_diff_deg(fused, state.ema_angle)
        state.ema_angle = wrap_deg(state.ema_angle + step)
    state.last_distance = m.distance
    return state.ema_angle, m.distance, selection


def reset(state: BaselineState) -> BaselineState:
    """Return a state with the same smoothing factor and no history."""
    return BaselineState(ema_alpha=state.ema_alpha)


class BaselineTracker(RelativeEstimatorBase):
    """Baseline wrapped for the harness; remembers the last slope selection."""

    name = "baseline"

    def __init__(
        self,
        sensor: SensorModel,
        ema_alpha: float = EMA_ALPHA,
        closeness_threshold: float = CLOSENESS_THRESHOLD_DEG,
        certainty_mode: CertaintyMode = "normalized",
    ):
        super().__init__(sensor)
        self.closeness_threshold = closeness_threshold
        self.certainty_mode = certainty_mode
        self.state = BaselineState(ema_alpha=ema_alpha)
        self.last_selection: Optional[SlopeSelection] = None

    def reset(self, initial: Optional[RelativeState] = None) -> None:
        self.state = reset(self.state)
        self.last_selection = None
        self.updates = 0

    def process(self, tick: EstimatorTick) -> RelativeState:
        angle, distance, selection = estimate(
            tick.measurement,
            self.sensor,
            self.state,
            self.closeness_threshold,
            self.certainty_mode,
        )
        self.last_selection = selection
        self.updates += 1
        if self.updates == 1:
            logger.debug(f"Baseline seeded at {angle:.2f} deg, slopes {selection.slopes}")
        return RelativeState(angle, distance)
