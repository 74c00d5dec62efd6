import pytest
from loguru import logger

from src.baseline_estimator import BaselineTracker
from src.ekf import EkfTracker
from src.estimator_base import RelativeEstimatorBase
from src.estimator_factory import EstimatorFactory
from src.sim_config import SimulationConfig


class TestEstimatorFactory:
    def test_create_baseline(self, sensor):
        """Test factory creates the baseline with configured settings"""
        logger.info("Testing factory creates baseline")
        config = SimulationConfig()
        config.baseline.ema_alpha = 0.5
        config.baseline.certainty_mode = "unnormalized"

        estimator = EstimatorFactory.create_estimator("baseline", sensor, config)

        assert isinstance(estimator, BaselineTracker)
        assert isinstance(estimator, RelativeEstimatorBase)
        assert estimator.state.ema_alpha == 0.5
        assert estimator.certainty_mode == "unnormalized"
        assert estimator.divisor_dependent is False

        logger.info("Factory creates baseline test passed")

    def test_noiseless_baseline_skips_smoothing(self, noiseless_sensor):
        """Test the baseline gets ema_alpha 1 on a noiseless sensor"""
        config = SimulationConfig()
        config.baseline.ema_alpha = 0.3

        estimator = EstimatorFactory.create_estimator("baseline", noiseless_sensor, config)

        assert estimator.state.ema_alpha == 1.0
        assert config.baseline.ema_alpha == 0.3

    def test_create_ekf_case1(self, sensor):
        """Test factory creates the complete-model EKF with its divisor"""
        logger.info("Testing factory creates ekf_case1")

        estimator = EstimatorFactory.create_estimator("ekf_case1", sensor, divisor=4)

        assert isinstance(estimator, EkfTracker)
        assert estimator.case == 1
        assert estimator.name == "ekf_case1"
        assert estimator.divisor == 4
        assert estimator.divisor_dependent is True

        logger.info("Factory creates ekf_case1 test passed")

    def test_create_ekf_case2(self, sensor):
        """Test factory creates the local-only EKF with configured process noise"""
        config = SimulationConfig()
        config.ekf.q_case2 = 5e-3

        estimator = EstimatorFactory.create_estimator("ekf_case2", sensor, config)

        assert isinstance(estimator, EkfTracker)
        assert estimator.case == 2
        assert estimator.divisor_dependent is False
        assert estimator._init_args["q_case2"] == 5e-3

    def test_invalid_estimator_raises_error(self, sensor):
        """Test invalid estimator name raises ValueError"""
        logger.info("Testing invalid estimator raises ValueError")

        with pytest.raises(ValueError) as exc_info:
            EstimatorFactory.create_estimator("particle_filter", sensor)

        assert "Unknown estimator" in str(exc_info.value)
        assert "particle_filter" in str(exc_info.value)

        logger.info("Invalid estimator test passed")
