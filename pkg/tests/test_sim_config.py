import json

import pytest
from loguru import logger
from pydantic import ValidationError

from src.exceptions import CalibrationError, ConfigurationError
from src.sim_config import SimulationConfig
from src.uwb_model import save_calibration


class TestSimulationConfig:
    """Test suite for campaign configuration"""

    def test_defaults(self):
        """Test default values match the protocol"""
        logger.info("Testing configuration defaults")

        config = SimulationConfig()

        assert config.harness.estimator_rate == 28.0
        assert config.harness.divisors == list(range(1, 11))
        assert config.harness.estimators == ["baseline", "ekf_case1", "ekf_case2"]
        assert config.ekf.q_case1 == 1e-6
        assert config.ekf.q_case2 == 1e-3
        assert config.sensor.distance_std == 0.0343
        assert config.baseline.ema_alpha == 0.3

    def test_save_and_load(self, tmp_path):
        """Test a saved configuration loads back equal"""
        logger.info("Testing configuration save and load")
        config = SimulationConfig()
        config.harness.master_seed = 42
        config.harness.divisors = [10, 1]
        path = tmp_path / "config.json"

        config.save_to_file(path)
        loaded = SimulationConfig.load_from_file(path)

        assert loaded == config
        assert loaded.harness.divisors == [1, 10]

        logger.info("Configuration save and load test passed")

    @pytest.mark.parametrize("divisors", [[0], [11], []])
    def test_invalid_divisors(self, divisors):
        """Test divisors outside [1, 10] are rejected on assignment"""
        config = SimulationConfig()

        with pytest.raises(ValidationError):
            config.harness.divisors = divisors

    def test_estimators_in_canonical_order(self):
        """Test estimator lists are reordered to the canonical order"""
        config = SimulationConfig()

        config.harness.estimators = ["ekf_case2", "baseline"]

        assert config.harness.estimators == ["baseline", "ekf_case2"]

    def test_invalid_json_file(self, tmp_path):
        """Test a malformed file raises ConfigurationError"""
        path = tmp_path / "config.json"
        path.write_text("{ not json")

        with pytest.raises(ConfigurationError) as exc_info:
            SimulationConfig.load_from_file(path)

        assert "invalid JSON" in str(exc_info.value)

    def test_invalid_value_names_field(self, tmp_path):
        """Test a validation failure names the offending field"""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"ekf": {"q_case1": -1.0}}))

        with pytest.raises(ConfigurationError) as exc_info:
            SimulationConfig.load_from_file(path)

        assert "ekf.q_case1" in str(exc_info.value)

    def test_missing_file(self, tmp_path):
        """Test a missing file raises ConfigurationError"""
        with pytest.raises(ConfigurationError):
            SimulationConfig.load_from_file(tmp_path / "absent.json")

    def test_wrong_schema_version(self, tmp_path):
        """Test an unknown schema version is rejected"""
        path = tmp_path / "config.json"
        path.write_text(json.dumps({"schema_version": 99}))

        with pytest.raises(ConfigurationError):
            SimulationConfig.load_from_file(path)


class TestBuildSensor:
    """Test suite for sensor construction from configuration"""

    def test_noise_switch(self):
        """Test noise_enabled flows into the sensor"""
        config = SimulationConfig()
        config.sensor.noise_enabled = False

        assert config.build_sensor().noise_enabled is False

    def test_synthetic_sigma_settings(self):
        """Test sigma settings shape the synthetic tables"""
        config = SimulationConfig()
        config.sensor.sigma_min = 1.0

        sensor = config.build_sensor()

        assert sensor.angle_std(0, 0.0) == pytest.approx(1.0, abs=0.01)

    def test_calibration_file(self, tmp_path, calibration):
        """Test a calibration file replaces the synthetic tables"""
        path = tmp_path / "cal.json"
        save_calibration(calibration, path)
        config = SimulationConfig()
        config.sensor.calibration_file = str(path)

        sensor = config.build_sensor()

        assert sensor.calibration == calibration

    def test_broken_calibration_file(self, tmp_path):
        """Test an unreadable calibration file raises CalibrationError"""
        path = tmp_path / "cal.json"
        path.write_text("[]")
        config = SimulationConfig()
        config.sensor.calibration_file = str(path)

        with pytest.raises(CalibrationError):
            config.build_sensor()
