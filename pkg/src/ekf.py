"""Extended Kalman filter on the relative state [theta_a (deg), r_rel (m)].

Case 1 propagates with robot A's odometry and robot B's velocity and bearing
received over the link; Case 2 only uses robot A's odometry. Both observe the
three pair readings through the slopes selected by the baseline and the UWB
distance. Angles are degrees in the state and the measurements; trigonometry
is evaluated in radians.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Literal, NamedTuple, Optional, Sequence

import numpy as np
import scipy.linalg
from loguru import logger

from src.config.constants import (
    INITIAL_ANGLE_STD_DEG,
    INITIAL_RANGE_STD,
    INNOVATION_CONDITION_LIMIT,
    PSD_TOLERANCE,
    Q_CASE1,
    Q_CASE2,
    R_MIN,
    RANGE_INFLATION_ON_CLAMP,
)
from src.estimator_base import EstimatorTick, RelativeEstimatorBase
from src.geometry import AngleDeg, angle_diff_deg, wrap_deg
from src.kinematics import RelativeState
from src.uwb_model import MeasurementVector, SensorModel, SlopeCalibration, SlopeName

Case = Literal[1, 2]
DEG = 180.0 / math.pi


class ControlVectorCase1(NamedTuple):
    v_a: float  # m/s
    phi_dot_a: float  # deg/s
    v_b: float  # m/s
    theta_b: AngleDeg


class ControlVectorCase2(NamedTuple):
    v_a: float  # m/s
    phi_dot_a: float  # deg/s


@dataclass(frozen=True)
class EkfState:
    """Estimate, covariances, step length and event counters of one filter."""

    x: RelativeState
    p: np.ndarray
    q: np.ndarray
    dt: float = 1.0 / 28.0
    r_min: float = R_MIN
    singular_clamps: int = 0
    skipped_updates: int = 0

    def vector(self) -> np.ndarray:
        return np.array([self.x.theta_a, self.x.r_rel])


class PairObservation(NamedTuple):
    """Selected calibration slope of one pair, with its offset and reading bias."""

    offset: float
    slope: SlopeCalibration
    bias: float = 0.0


class ObservationModel(NamedTuple):
    slopes: tuple[PairObservation, PairObservation, PairObservation]
    r_k: np.ndarray  # 4x4 diagonal


class Correction(NamedTuple):
    x: np.ndarray
    p: np.ndarray
    gain: np.ndarray


# Process models -------------------------------------------------------------


def process_model_case1(x: np.ndarray, u: ControlVectorCase1, dt: float) -> np.ndarray:
    """Euler step of the complete relative-state model, angle left unwrapped."""
    ta, tb = math.radians(x[0]), math.radians(u.theta_b)
    theta_dot = -u.phi_dot_a + DEG * (u.v_a * math.sin(ta) + u.v_b * math.sin(tb)) / x[1]
    r_dot = -u.v_a * math.cos(ta) - u.v_b * math.cos(tb)
    return np.array([x[0] + dt * theta_dot, x[1] + dt * r_dot])


def process_jacobian_case1(x: np.ndarray, u: ControlVectorCase1, dt: float) -> np.ndarray:
    """Jacobian of process_model_case1 with respect to the state."""
    ta, tb = math.radians(x[0]), math.radians(u.theta_b)
    lateral = u.v_a * math.sin(ta) + u.v_b * math.sin(tb)
    return np.eye(2) + dt * np.array(
        [
            [u.v_a * math.cos(ta) / x[1], -DEG * lateral / x[1] ** 2],
            [u.v_a * math.sin(ta) / DEG, 0.0],
        ]
    )


def process_model_case2(x: np.ndarray, u: ControlVectorCase2, dt: float) -> np.ndarray:
    """Euler step of the local-only model, angle left unwrapped."""
    ta = math.radians(x[0])
    theta_dot = -u.phi_dot_a + DEG * u.v_a * math.sin(ta) / x[1]
    r_dot = -u.v_a * math.cos(ta)
    return np.array([x[0] + dt * theta_dot, x[1] + dt * r_dot])


def process_jacobian_case2(x: np.ndarray, u: ControlVectorCase2, dt: float) -> np.ndarray:
    """Jacobian of process_model_case2 with respect to the state."""
    ta = math.radians(x[0])
    return np.eye(2) + dt * np.array(
        [
            [u.v_a * math.cos(ta) / x[1], -DEG * u.v_a * math.sin(ta) / x[1] ** 2],
            [u.v_a * math.sin(ta) / DEG, 0.0],
        ]
    )


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def _predict(s: EkfState, model, jacobian, u) -> EkfState:
    x = s.vector()
    p = s.p
    clamps = s.singular_clamps
    if x[1] <= s.r_min:
        logger.warning(f"Range {x[1]:.4g} m at or below r_min before predict; clamping")
        x[1] = s.r_min
        p = p.copy()
        p[1, 1] *= RANGE_INFLATION_ON_CLAMP
        clamps += 1

    f_k = jacobian(x, u, s.dt)
    x_next = model(x, u, s.dt)
    p_next = _symmetrize(f_k @ p @ f_k.T + s.q)

    if x_next[1] <= s.r_min:
        logger.warning(f"Range {x_next[1]:.4g} m at or below r_min after predict; clamping")
        x_next[1] = s.r_min
        p_next[1, 1] *= RANGE_INFLATION_ON_CLAMP
        clamps += 1

    return replace(
        s,
        x=RelativeState(wrap_deg(x_next[0]), float(x_next[1])),
        p=p_next,
        singular_clamps=clamps,
    )


def predict_case1(s: EkfState, u: ControlVectorCase1) -> EkfState:
    """
    Prediction with the complete model.

    x <- F(x, u) with theta reduced modulo 360; P <- F_k P F_k^T + Q.
    A range at or below r_min is clamped and its variance inflated tenfold.
    """
    return _predict(s, process_model_case1, process_jacobian_case1, u)


def predict_case2(s: EkfState, u: ControlVectorCase2) -> EkfState:
    """Prediction with the local-only model; see predict_case1."""
    return _predict(s, process_model_case2, process_jacobian_case2, u)


# Update ---------------------------------------------------------------------


def build_observation_model(
    sensor: SensorModel,
    slopes: Sequence[SlopeName],
    theta_estimate: AngleDeg,
) -> ObservationModel:
    """
    Observation model for the selected slopes at the estimated bearing.

    Pair variances come from the dispersion table at the estimated theta_a;
    the distance variance is the sensor's ranging variance.
    """
    pairs = []
    variances = []
    for i, name in enumerate(slopes):
        pair = sensor.pairs[i]
        pairs.append(
            PairObservation(
                pair.orientation_offset,
                pair.slope(name),
                sensor.angle_bias(i, theta_estimate),
            )
        )
        variances.append(sensor.filter_angle_variance(i, theta_estimate))
    variances.append(sensor.filter_distance_variance())
    return ObservationModel((pairs[0], pairs[1], pairs[2]), np.diag(variances))


def predicted_measurement(x: RelativeState, obs: ObservationModel) -> np.ndarray:
    """H(x): pair readings as global-frame angles, then the range."""
    values = []
    for pair in obs.slopes:
        theta_loc = angle_diff_deg(x.theta_a, pair.offset)
        values.append(wrap_deg(pair.offset + pair.slope.reading(theta_loc) + pair.bias))
    values.append(x.r_rel)
    return np.array(values)


def observation_jacobian(obs: ObservationModel) -> np.ndarray:
    h = np.zeros((4, 2))
    for i, pair in enumerate(obs.slopes):
        h[i, 0] = pair.slope.slope
    h[3, 1] = 1.0
    return h


def kalman_correct(
    x: np.ndarray,
    p: np.ndarray,
    innovation: np.ndarray,
    h: np.ndarray,
    r: np.ndarray,
) -> Optional[Correction]:
    """
    Linear Kalman correction.

    K = P H^T S^-1, x <- x + K y, P <- (I - K H) P, symmetrized.

    Returns:
        The correction, or None if the innovation covariance S is not safely invertible
    """
    s = h @ p @ h.T + r
    cond = np.linalg.cond(s)
    if not np.isfinite(cond) or cond > INNOVATION_CONDITION_LIMIT:
        return None
    # S is symmetric positive definite, so K^T = S^-1 H P
    gain = scipy.linalg.solve(s, h @ p, assume_a="pos").T
    x_new = x + gain @ innovation
    p_new = _symmetrize((np.eye(p.shape[0]) - gain @ h) @ p)
    return Correction(x_new, p_new, gain)


def update(s: EkfState, y: MeasurementVector, obs: ObservationModel) -> EkfState:
    """
    Measurement update with wrapped angle innovations.

    Raises nothing: an ill-conditioned innovation covariance skips the update
    and increments skipped_updates.
    """
    predicted = predicted_measurement(s.x, obs)
    innovation = np.array(
        [angle_diff_deg(y.pdoa_angles[i], predicted[i]) for i in range(3)]
        + [y.distance - predicted[3]]
    )
    correction = kalman_correct(s.vector(), s.p, innovation, observation_jacobian(obs), obs.r_k)
    if correction is None:
        logger.warning(f"Innovation covariance ill-conditioned at {s.x}; update skipped")
        return replace(s, skipped_updates=s.skipped_updates + 1)

    x_new = correction.x
    return replace(
        s,
        x=RelativeState(wrap_deg(x_new[0]), max(float(x_new[1]), s.r_min)),
        p=correction.p,
    )


def initial_state(
    initial: RelativeState,
    case: Case,
    q_case1: float = Q_CASE1,
    q_case2: float = Q_CASE2,
    angle_std: float = INITIAL_ANGLE_STD_DEG,
    range_std: float = INITIAL_RANGE_STD,
    r_min: float = R_MIN,
) -> EkfState:
    """Filter started at the true state with a small diagonal covariance."""
    q = q_case1 if case == 1 else q_case2
    return EkfState(
        x=initial,
        p=np.diag([angle_std**2, range_std**2]),
        q=q * np.eye(2),
        r_min=r_min,
    )


# Harness integration --------------------------------------------------------


@dataclass
class EstimatorRun:
    """Trajectory and health counters of one filter over one run."""

    trajectory: list[RelativeState] = field(default_factory=list)
    updates: int = 0
    skipped_updates: int = 0
    singular_clamps: int = 0
    psd_violations: int = 0
    min_eigenvalue: float = math.inf


class EkfTracker(RelativeEstimatorBase):
    """EKF driven tick by tick, with a zero-order hold on robot B's link data."""

    def __init__(
        self,
        case: Case,
        sensor: SensorModel,
        divisor: int = 1,
        q_case1: float = Q_CASE1,
        q_case2: float = Q_CASE2,
        initial_angle_std: float = INITIAL_ANGLE_STD_DEG,
        initial_range_std: float = INITIAL_RANGE_STD,
        r_min: float = R_MIN,
    ):
        super().__init__(sensor)
        if case not in (1, 2):
            raise ValueError(f"Unknown EKF case: {case}")
        self.case = case
        self.name = f"ekf_case{case}"
        self.divisor_dependent = case == 1
        self.divisor = divisor
        self._init_args = dict(
            q_case1=q_case1,
            q_case2=q_case2,
            angle_std=initial_angle_std,
            range_std=initial_range_std,
            r_min=r_min,
        )
        self.state: Optional[EkfState] = None
        self.held_b: Optional[tuple[float, AngleDeg]] = None
        self.min_eigenvalue = math.inf

    def reset(self, initial: Optional[RelativeState] = None) -> None:
        if initial is None:
            raise ValueError("EKF must be reset to the true initial state")
        self.state = initial_state(initial, self.case, **self._init_args)
        self.held_b = None
        self.updates = 0
        self.skipped_updates = 0
        self.psd_violations = 0
        self.singular_clamps = 0
        self.min_eigenvalue = math.inf

    def process(self, tick: EstimatorTick) -> RelativeState:
        if self.state is None:
            raise RuntimeError("EKF used before reset()")
        if tick.slopes is None:
            raise ValueError(f"Tick {tick.index} carries no slope selection")

        s = replace(self.state, dt=tick.dt)
        if self.case == 1:
            if self.held_b is None or (tick.index - 1) % self.divisor == 0:
                self.held_b = (tick.v_b, tick.theta_b)
            u1 = ControlVectorCase1(tick.v_a, tick.phi_dot_a, *self.held_b)
            s = predict_case1(s, u1)
        else:
            s = predict_case2(s, ControlVectorCase2(tick.v_a, tick.phi_dot_a))

        obs = build_observation_model(self.sensor, tick.slopes, s.x.theta_a)
        s = update(s, tick.measurement, obs)
        self.updates += 1
        self.skipped_updates = s.skipped_updates
        self.singular_clamps = s.singular_clamps

        eigenvalue = float(np.linalg.eigvalsh(s.p)[0])
        self.min_eigenvalue = min(self.min_eigenvalue, eigenvalue)
        if eigenvalue < PSD_TOLERANCE:
            self.psd_violations += 1
            logger.warning(
                f"{self.name}: covariance lost PSD at tick {tick.index} ({eigenvalue:.3g})"
            )

        self.state = s
        return s.x


def run_estimator(
    case: Case,
    ticks: Sequence[EstimatorTick],
    init: RelativeState,
    sensor: SensorModel,
    divisor: int = 1,
    **settings,
) -> EstimatorRun:
    """
    Run one filter over a time-aligned tick stream.

    Args:
        case: 1 for the complete model, 2 for the local-only model
        ticks: Measurements, slope selections and inputs, one per 28 Hz tick
        init: True relative state at t = 0
        sensor: Sensor model providing the dispersion used for R_k
        divisor: Robot-B link refreshes every divisor-th tick (Case 1)
        **settings: Forwarded to EkfTracker (q_case1, q_case2, initial stds, r_min)

    Returns:
        Trajectory of estimates and filter health counters
    """
    tracker = EkfTracker(case, sensor, divisor=divisor, **settings)
    tracker.reset(init)
    run = EstimatorRun()
    for tick in ticks:
        run.trajectory.append(tracker.process(tick))
    run.updates = tracker.updates
    run.skipped_updates = tracker.skipped_updates
    run.singular_clamps = tracker.singular_clamps
    run.psd_violations = tracker.psd_violations
    run.min_eigenvalue = tracker.min_eigenvalue
    logger.debug(
        f"ekf_case{case} (divisor {divisor}): {run.updates} updates, "
        f"{run.skipped_updates} skipped, {run.singular_clamps} clamps"
    )
    return run
