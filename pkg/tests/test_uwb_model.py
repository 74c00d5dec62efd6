import json

import numpy as np
import pytest
from loguru import logger

from src.exceptions import CalibrationError
from src.geometry import angle_diff_deg, wrap_deg
from src.kinematics import RelativeState
from src.uwb_model import (
    CalibrationSet,
    SensorModel,
    candidate_angles,
    check_calibration,
    default_calibration,
    load_calibration,
    measure,
    save_calibration,
)


class TestDefaultCalibration:
    """Test suite for the synthetic calibration tables"""

    def test_bin_layout(self, calibration):
        """Test 99 bins of 3.66 deg per pair"""
        logger.info("Testing dispersion bin layout")

        assert calibration.dispersion.bin_count == 99
        for pair in calibration.dispersion.pairs:
            assert len(pair.bins) == 99
        assert calibration.dispersion.bin_index(359.999) == 98
        assert calibration.dispersion.bin_index(0.0) == 0

    def test_sigma_extremes(self, sensor):
        """Test sigma is about 3 deg facing a pair and 15 deg at its extremity"""
        logger.info("Testing sigma at pair-local 0 and 90 deg")

        assert sensor.angle_std(0, 0.0) == pytest.approx(3.0, abs=0.01)
        assert sensor.angle_std(0, 90.0) == pytest.approx(15.0, abs=0.01)
        # pair 2 faces 120 deg
        assert sensor.angle_std(1, 120.0) == pytest.approx(3.0, abs=0.01)

        logger.info("Sigma extremes test passed")

    def test_wrap_probability_zero_facing_pair(self, sensor):
        """Test wrap events never happen near the pair normal"""
        for theta in (0.0, 30.0, 330.0):
            assert sensor.wrap_probability(0, theta) == 0.0

    def test_wrap_probability_bounded(self, calibration):
        """Test every bin's wrap probability stays within [0, 0.2]"""
        for pair in calibration.dispersion.pairs:
            for b in pair.bins:
                assert 0.0 <= b.wrap_probability <= 0.2

    def test_check_accepts_default(self, calibration):
        """Test the default calibration passes the semantic checks"""
        check_calibration(calibration)


class TestCalibrationFiles:
    """Test suite for calibration persistence and validation"""

    def test_save_and_load(self, tmp_path, calibration):
        """Test a saved calibration loads back unchanged"""
        logger.info("Testing calibration save and load")
        path = tmp_path / "calibration.json"

        save_calibration(calibration, path)
        loaded = load_calibration(path)

        assert loaded == calibration

    def test_corrupt_sigma_names_the_bin(self, tmp_path, calibration):
        """Test a non-positive sigma is reported with its pair and bin"""
        logger.info("Testing corrupt sigma diagnostics")
        data = json.loads(calibration.model_dump_json())
        data["dispersion"]["pairs"][1]["bins"][7]["std_dev"] = 0.0
        path = tmp_path / "bad.json"
        path.write_text(json.dumps(data))

        with pytest.raises(CalibrationError) as exc_info:
            load_calibration(path)

        assert exc_info.value.pair_id == 2
        assert exc_info.value.bin_index == 7
        assert exc_info.value.location == "dispersion.pairs[1].bins[7].std_dev"

        logger.info("Corrupt sigma diagnostics test passed")

    def test_invalid_json_reports_line(self, tmp_path):
        """Test malformed JSON reports its line number"""
        path = tmp_path / "broken.json"
        path.write_text('{\n  "pairs": [\n    oops\n  ]\n}')

        with pytest.raises(CalibrationError) as exc_info:
            load_calibration(path)

        assert "line 3" in str(exc_info.value)

    def test_schema_violation(self, tmp_path, calibration):
        """Test a missing field becomes a CalibrationError"""
        data = json.loads(calibration.model_dump_json())
        del data["pairs"][0]["rising"]
        path = tmp_path / "missing.json"
        path.write_text(json.dumps(data))

        with pytest.raises(CalibrationError) as exc_info:
            load_calibration(path)

        assert "pairs.0.rising" in str(exc_info.value)

    def test_wrong_slope_sign(self, calibration):
        """Test a rising slope with a negative coefficient is rejected"""
        data = json.loads(calibration.model_dump_json())
        data["pairs"][2]["rising"]["slope"] = -1.0
        broken = CalibrationSet.model_validate(data)

        with pytest.raises(CalibrationError) as exc_info:
            check_calibration(broken)

        assert exc_info.value.pair_id == 3


class TestMeasure:
    """Test suite for synthetic UWB measurements"""

    def test_noiseless_distance_is_exact(self, noiseless_sensor, rng):
        """Test zero-noise distance equals the true range"""
        m = measure(RelativeState(42.0, 1.75), noiseless_sensor, rng)

        assert m.distance == 1.75

    def test_noiseless_angles_read_through_rising_slope(self, noiseless_sensor, rng):
        """Test pairs seeing the robot in front read the true bearing, others its mirror"""
        logger.info("Testing noiseless pair readings at 30 deg")

        m = measure(RelativeState(30.0, 2.0), noiseless_sensor, rng)

        # pairs 1 and 2 see 30 deg on their rising slope, pair 3 on its falling slope
        assert m.pdoa_angles[0] == pytest.approx(30.0, abs=1e-9)
        assert m.pdoa_angles[1] == pytest.approx(30.0, abs=1e-9)
        assert m.pdoa_angles[2] == pytest.approx(270.0, abs=1e-9)

    def test_distance_noise_std(self, sensor):
        """Test the sample std of distance noise matches 3.43 cm"""
        logger.info("Testing distance noise statistics over 10000 draws")
        rng = np.random.default_rng(99)
        truth = RelativeState(10.0, 3.0)

        errors = [measure(truth, sensor, rng).distance - 3.0 for _ in range(10000)]

        assert 0.032 <= float(np.std(errors)) <= 0.037

        logger.info("Distance noise statistics test passed")

    @pytest.mark.parametrize("theta", [1.0, 30.0, 320.0])
    def test_angle_noise_follows_dispersion_table(self, sensor, theta):
        """Test the sample std of pair 1 readings matches the table sigma of its bin"""
        logger.info(f"Testing angle noise statistics at {theta} deg over 10000 draws")
        rng = np.random.default_rng(17)
        truth = RelativeState(theta, 2.0)

        errors = [
            angle_diff_deg(measure(truth, sensor, rng).pdoa_angles[0], theta) for _ in range(10000)
        ]

        expected = sensor.angle_std(0, theta)
        assert float(np.std(errors)) == pytest.approx(expected, rel=0.1)


    def test_same_seed_same_sequence(self, sensor):
        """Test identical seeds give identical measurement sequences"""
        truth = RelativeState(75.0, 1.2)
        first = [measure(truth, sensor, np.random.default_rng(5)) for _ in range(3)]
        second = [measure(truth, sensor, np.random.default_rng(5)) for _ in range(3)]

        assert first == second

    def test_angles_stay_wrapped(self, sensor, rng):
        """Test measured angles are always in [0, 360)"""
        for theta in np.linspace(0, 359, 60):
            m = measure(RelativeState(float(theta), 2.0), sensor, rng)
            assert all(0.0 <= a < 360.0 for a in m.pdoa_angles)

    def test_distance_never_below_floor(self, sensor, rng):
        """Test noisy distances are clamped at r_min"""
        for _ in range(200):
            assert measure(RelativeState(0.0, 0.002), sensor, rng).distance >= 1e-3


class TestCandidateAngles:
    """Test suite for slope inversion"""

    def test_six_candidates_in_order(self, noiseless_sensor, rng):
        """Test six candidates ordered by pair then rising/falling"""
        m = measure(RelativeState(30.0, 2.0), noiseless_sensor, rng)

        candidates = candidate_angles(m, noiseless_sensor)

        assert [(c.pair_index, c.slope) for c in candidates] == [
            (0, "rising"),
            (0, "falling"),
            (1, "rising"),
            (1, "falling"),
            (2, "rising"),
            (2, "falling"),
        ]

    def test_truth_among_candidates_of_every_pair(self, noiseless_sensor, rng):
        """Test every pair has a candidate equal to the true bearing"""
        logger.info("Testing truth is recovered by every pair")

        for theta in (5.0, 30.0, 100.0, 200.0, 333.0):
            m = measure(RelativeState(theta, 2.0), noiseless_sensor, rng)
            candidates = candidate_angles(m, noiseless_sensor)
            for pair_index in range(3):
                errors = [
                    abs(angle_diff_deg(c.angle, theta))
                    for c in candidates
                    if c.pair_index == pair_index
                ]
                assert min(errors) < 1e-9

        logger.info("Truth recovery test passed")

    def test_rising_and_falling_are_mirror_images(self, noiseless_sensor, rng):
        """Test one pair's two candidates mirror about its +/-90 deg extremity"""
        m = measure(RelativeState(30.0, 2.0), noiseless_sensor, rng)
        candidates = candidate_angles(m, noiseless_sensor)

        for pair_index, offset in enumerate(noiseless_sensor.offsets):
            rising, falling = [c for c in candidates if c.pair_index == pair_index]
            assert not rising.clamped and not falling.clamped
            mirror = wrap_deg(2.0 * (offset + 90.0) - rising.angle)
            assert angle_diff_deg(falling.angle, mirror) == pytest.approx(0.0, abs=1e-9)

    def test_extremity_reading_is_less_certain(self, noiseless_sensor, rng):
        """Test a pair seeing the robot at its extremity is trusted less"""
        logger.info("Testing reading certainty ordering at 30 deg")
        m = measure(RelativeState(30.0, 2.0), noiseless_sensor, rng)

        candidates = candidate_angles(m, noiseless_sensor)

        # pair 2 sees 30 deg at pair-local -90
        assert candidates[0].reading_certainty == candidates[1].reading_certainty
        assert candidates[0].reading_certainty > candidates[2].reading_certainty
        assert candidates[2].reading_certainty == pytest.approx(0.2, abs=0.01)

    def test_supported_mirror_is_more_certain(self, noiseless_sensor, rng):
        """Test the mirror candidate agreeing with the other pairs wins"""
        m = measure(RelativeState(30.0, 2.0), noiseless_sensor, rng)

        candidates = candidate_angles(m, noiseless_sensor)

        # pair 1 rising and pair 3 falling point at 30 deg
        assert candidates[0].certainty > candidates[1].certainty
        assert candidates[5].certainty > candidates[4].certainty
        assert candidates[0].certainty == pytest.approx(candidates[0].reading_certainty)

    def test_nearest_candidates_most_certain_on_average(self, sensor):
        """Test over noisy draws the candidates closest to truth carry the most certainty"""
        logger.info("Testing mean certainty against mean error at 30 deg")
        rng = np.random.default_rng(11)
        draws = 2000
        errors = np.zeros(6)
        certainties = np.zeros(6)

        for _ in range(draws):
            m = measure(RelativeState(30.0, 2.0), sensor, rng)
            for k, c in enumerate(candidate_angles(m, sensor)):
                errors[k] += abs(angle_diff_deg(c.angle, 30.0)) / draws
                certainties[k] += c.certainty / draws

        nearest = set(np.argsort(errors)[:2].tolist())
        assert nearest == {0, 5}
        others = [k for k in range(6) if k not in nearest]
        assert min(certainties[k] for k in nearest) > max(certainties[k] for k in others)

        logger.info("Mean certainty test passed")

    def test_certainties_in_unit_interval(self, sensor, rng):
        """Test certainties are within [0, 1]"""
        for theta in np.linspace(0, 359, 40):
            m = measure(RelativeState(float(theta), 2.0), sensor, rng)
            for c in candidate_angles(m, sensor):
                assert 0.0 <= c.certainty <= 1.0


class TestSensorModel:
    """Test suite for the compiled sensor model"""

    def test_noiseless_filter_variances_use_floor(self, noiseless_sensor):
        """Test filters assume tiny variances when noise is disabled"""
        assert noiseless_sensor.filter_angle_variance(0, 10.0) == pytest.approx(1e-6)
        assert noiseless_sensor.filter_distance_variance() == pytest.approx(1e-10)

    def test_noisy_filter_variances(self, sensor):
        """Test filters assume the table sigma and ranging sigma"""
        expected = sensor.angle_std(0, 90.0) ** 2

        assert sensor.filter_angle_variance(0, 90.0) == pytest.approx(expected)
        assert sensor.filter_distance_variance() == pytest.approx(0.0343**2)

    def test_custom_calibration_offsets(self):
        """Test a custom assembly orientation flows into the sensor"""
        sensor = SensorModel(default_calibration(offsets=(10.0, 130.0, 250.0)))

        assert sensor.offsets == (10.0, 130.0, 250.0)
