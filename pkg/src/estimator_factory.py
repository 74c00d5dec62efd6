from typing import Optional

from src.baseline_estimator import BaselineTracker
from src.ekf import EkfTracker
from src.estimator_base import RelativeEstimatorBase
from src.sim_config import SimulationConfig
from src.uwb_model import SensorModel


class EstimatorFactory:
    """Factory for creating estimator instances based on name."""

    @staticmethod
    def create_estimator(
        name: str,
        sensor: SensorModel,
        config: Optional[SimulationConfig] = None,
        divisor: int = 1,
    ) -> RelativeEstimatorBase:
        """
        Create and return an estimator instance.

        Args:
            name: The estimator ("baseline", "ekf_case1" or "ekf_case2")
            sensor: Sensor model shared by every estimator of a run
            config: Simulation configuration; defaults apply when omitted
            divisor: Robot-B data-rate divisor, only used by "ekf_case1"

        The baseline runs with ema_alpha 1 when the sensor is noiseless.

        Returns:
            RelativeEstimatorBase instance for the selected estimator

        Raises:
            ValueError: If an unknown estimator is specified
        """
        config = config or SimulationConfig()
        if name == "baseline":
            b = config.baseline
            # noiseless readings pass through unsmoothed
            ema_alpha = b.ema_alpha if sensor.noise_enabled else 1.0
            return BaselineTracker(
                sensor,
                ema_alpha=ema_alpha,
                closeness_threshold=b.closeness_threshold,
                certainty_mode=b.certainty_mode,
            )
        if name in ("ekf_case1", "ekf_case2"):
            e = config.ekf
            return EkfTracker(
                1 if name == "ekf_case1" else 2,
                sensor,
                divisor=divisor,
                q_case1=e.q_case1,
                q_case2=e.q_case2,
                initial_angle_std=e.initial_angle_std,
                initial_range_std=e.initial_range_std,
                r_min=e.r_min,
            )
        raise ValueError(f"Unknown estimator: {name}")
