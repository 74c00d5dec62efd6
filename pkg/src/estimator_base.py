from abc import ABC, abstractmethod
from typing import NamedTuple, Optional

from src.geometry import AngleDeg
from src.kinematics import RelativeState
from src.uwb_model import MeasurementVector, SensorModel, SlopeName


class EstimatorTick(NamedTuple):
    """Everything an estimator receives at one 28 Hz tick.

    Odometry and link values are the samples held over the interval that ends
    at this tick (zero-order hold at the start of the interval).
    """

    index: int  # 1-based tick number
    t: float  # seconds
    dt: float  # seconds since the previous tick
    measurement: MeasurementVector
    v_a: float
    phi_dot_a: float
    v_b: float
    theta_b: AngleDeg
    slopes: Optional[tuple[SlopeName, SlopeName, SlopeName]] = None


class RelativeEstimatorBase(ABC):
    """Abstract base class for relative-state estimators run by the harness."""

    name: str = "estimator"
    divisor_dependent: bool = False

    def __init__(self, sensor: SensorModel):
        """
        Initialize the estimator with the sensor it reads.

        Args:
            sensor: Calibration and noise model shared by the run
        """
        self.sensor = sensor
        self.updates = 0
        self.skipped_updates = 0
        self.psd_violations = 0
        self.singular_clamps = 0

    @abstractmethod
    def reset(self, initial: Optional[RelativeState] = None) -> None:
        """
        Forget all history.

        Args:
            initial: True relative state at t = 0, used by estimators that start from it
        """
        pass

    @abstractmethod
    def process(self, tick: EstimatorTick) -> RelativeState:
        """
        Consume one tick and return the current estimate.

        Args:
            tick: Measurement and inputs of this tick

        Returns:
            Estimated relative state at the tick time
        """
        pass
