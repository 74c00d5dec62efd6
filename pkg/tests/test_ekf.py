import math

import numpy as np
import pytest
from loguru import logger

import src.ekf as ekf
from src.config.constants import R_MIN
from src.ekf import (
    ControlVectorCase1,
    ControlVectorCase2,
    EkfState,
    EkfTracker,
    ObservationModel,
    build_observation_model,
    initial_state,
    kalman_correct,
    observation_jacobian,
    predict_case1,
    predict_case2,
    predicted_measurement,
    process_jacobian_case1,
    process_jacobian_case2,
    process_model_case1,
    process_model_case2,
    run_estimator,
    update,
)
from src.estimator_base import EstimatorTick
from src.geometry import angle_diff_deg
from src.kinematics import RelativeState
from src.uwb_model import measure

SLOPES_AT_30 = ("rising", "rising", "falling")


def _static_ticks(sensor, rng, truth, n, slopes=SLOPES_AT_30, theta_b=0.0):
    ticks = []
    for k in range(1, n + 1):
        ticks.append(
            EstimatorTick(
                index=k,
                t=k / 28.0,
                dt=1 / 28.0,
                measurement=measure(truth, sensor, rng),
                v_a=0.0,
                phi_dot_a=0.0,
                v_b=0.0,
                theta_b=theta_b,
                slopes=slopes,
            )
        )
    return ticks


def _numeric_jacobian(model, x, u, dt, eps=1e-5):
    columns = []
    for j in range(2):
        step = np.zeros(2)
        step[j] = eps
        columns.append((model(x + step, u, dt) - model(x - step, u, dt)) / (2 * eps))
    return np.column_stack(columns)


class TestPredict:
    """Test suite for the prediction step"""

    def test_zero_input_keeps_state(self):
        """Test zero velocities leave x unchanged and add Q to P"""
        logger.info("Testing prediction with zero input")
        s = initial_state(RelativeState(30.0, 2.0), case=1)

        out = predict_case1(s, ControlVectorCase1(0.0, 0.0, 0.0, 123.0))

        assert out.x.theta_a == pytest.approx(30.0)
        assert out.x.r_rel == pytest.approx(2.0)
        assert out.p == pytest.approx(s.p + s.q)

    def test_equilibrium_is_fixed_point(self):
        """Test a head-on chase at equal speed is a fixed point of the model"""
        s = initial_state(RelativeState(0.0, 2.0), case=1)

        out = predict_case1(s, ControlVectorCase1(1.0, 0.0, 1.0, 180.0))

        assert min(out.x.theta_a, 360.0 - out.x.theta_a) == pytest.approx(0.0, abs=1e-9)
        assert out.x.r_rel == pytest.approx(2.0, abs=1e-12)

    def test_case2_ignores_robot_b(self):
        """Test the local-only model with A still predicts no change"""
        s = initial_state(RelativeState(75.0, 1.0), case=2)

        out = predict_case2(s, ControlVectorCase2(0.0, 0.0))

        assert out.x == s.x
        assert out.p == pytest.approx(s.p + 1e-3 * np.eye(2))

    def test_spin_rotates_bearing(self):
        """Test A spinning at 28 deg/s moves the bearing back by 1 deg per tick"""
        s = initial_state(RelativeState(10.0, 1.0), case=2)

        out = predict_case2(s, ControlVectorCase2(0.0, 28.0))

        assert out.x.theta_a == pytest.approx(9.0)

    def test_angle_wrapped_after_predict(self):
        """Test the predicted bearing is reduced into [0, 360)"""
        s = initial_state(RelativeState(0.5, 1.0), case=2)

        out = predict_case2(s, ControlVectorCase2(0.0, 28.0))

        assert out.x.theta_a == pytest.approx(359.5)

    def test_clamps_small_range(self):
        """Test a range below r_min is clamped and its variance inflated"""
        logger.info("Testing range clamp in prediction")
        s = initial_state(RelativeState(30.0, 5e-4), case=2)

        out = predict_case2(s, ControlVectorCase2(0.0, 0.0))

        assert out.x.r_rel == R_MIN
        assert out.singular_clamps >= 1
        assert out.p[1, 1] > s.p[1, 1] * 10

    @pytest.mark.parametrize("case", [1, 2])
    def test_jacobian_matches_finite_differences(self, case):
        """Test analytic Jacobians against central differences at random points"""
        logger.info(f"Testing case {case} Jacobian against finite differences")
        rng = np.random.default_rng(7 + case)
        dt = 1 / 28.0

        for _ in range(1000):
            x = np.array([rng.uniform(0, 360), rng.uniform(0.5, 5.0)])
            if case == 1:
                v_a, v_b = rng.uniform(-2, 2, 2)
                u = ControlVectorCase1(v_a, rng.uniform(-180, 180), v_b, rng.uniform(0, 360))
                analytic = process_jacobian_case1(x, u, dt)
                numeric = _numeric_jacobian(process_model_case1, x, u, dt)
            else:
                u = ControlVectorCase2(rng.uniform(-2, 2), rng.uniform(-180, 180))
                analytic = process_jacobian_case2(x, u, dt)
                numeric = _numeric_jacobian(process_model_case2, x, u, dt)
            assert analytic == pytest.approx(numeric, rel=1e-5, abs=1e-7)

        logger.info(f"Case {case} Jacobian test passed")


class TestKalmanCorrect:
    """Test suite for the linear correction"""

    def test_scalar_gain(self):
        """Test P = R = 1 gives a gain of 0.5"""
        logger.info("Testing scalar Kalman gain")

        c = kalman_correct(
            np.array([0.0]), np.eye(1), np.array([2.0]), np.eye(1), np.eye(1)
        )

        assert c.gain == pytest.approx(np.array([[0.5]]))
        assert c.x == pytest.approx(np.array([1.0]))
        assert c.p == pytest.approx(np.array([[0.5]]))

    def test_matches_joseph_form(self):
        """Test the short covariance update equals the Joseph form at the optimal gain"""
        logger.info("Testing covariance update against the Joseph form")
        rng = np.random.default_rng(21)

        for _ in range(100):
            a = rng.normal(size=(2, 2))
            p = a @ a.T + 0.1 * np.eye(2)
            h = rng.normal(size=(4, 2))
            r = np.diag(rng.uniform(0.1, 2.0, 4))

            c = kalman_correct(np.zeros(2), p, rng.normal(size=4), h, r)

            i_kh = np.eye(2) - c.gain @ h
            joseph = i_kh @ p @ i_kh.T + c.gain @ r @ c.gain.T
            np.testing.assert_allclose(c.p, joseph, rtol=0, atol=1e-9)

        logger.info("Joseph form test passed")

    def test_zero_innovation(self):
        """Test a zero innovation keeps x and shrinks P"""
        p = np.diag([4.0, 1.0])

        c = kalman_correct(np.array([1.0, 2.0]), p, np.zeros(2), np.eye(2), np.eye(2))

        assert c.x == pytest.approx(np.array([1.0, 2.0]))
        assert np.all(np.diag(c.p) < np.diag(p))
        assert c.p == pytest.approx(c.p.T)

    def test_ill_conditioned_returns_none(self):
        """Test an ill-conditioned innovation covariance yields no correction"""
        c = kalman_correct(
            np.zeros(2), np.eye(2), np.ones(2), np.zeros((2, 2)), np.diag([1e-20, 1.0])
        )

        assert c is None


class TestObservation:
    """Test suite for the observation model"""

    def test_predicted_measurement_matches_noiseless_sensor(self, noiseless_sensor, rng):
        """Test H(x) reproduces the noiseless readings at the true state"""
        truth = RelativeState(30.0, 2.0)
        obs = build_observation_model(noiseless_sensor, SLOPES_AT_30, truth.theta_a)

        predicted = predicted_measurement(truth, obs)
        m = measure(truth, noiseless_sensor, rng)

        for i in range(3):
            assert angle_diff_deg(predicted[i], m.pdoa_angles[i]) == pytest.approx(0.0, abs=1e-9)
        assert predicted[3] == pytest.approx(2.0)

    def test_jacobian_uses_slope_coefficients(self, sensor):
        """Test the angle rows carry the selected slope and the range row is [0, 1]"""
        obs = build_observation_model(sensor, SLOPES_AT_30, 30.0)

        h = observation_jacobian(obs)

        assert h == pytest.approx(np.array([[1, 0], [1, 0], [-1, 0], [0, 1]]))

    def test_noise_from_dispersion_table(self, sensor):
        """Test R_k carries the dispersion at the estimated bearing"""
        obs = build_observation_model(sensor, SLOPES_AT_30, 30.0)

        expected = [sensor.angle_std(i, 30.0) ** 2 for i in range(3)] + [0.0343**2]
        assert np.diag(obs.r_k) == pytest.approx(np.array(expected))


class TestUpdate:
    """Test suite for the measurement update"""

    def test_innovation_wraps_across_zero(self, noiseless_sensor, rng):
        """Test a state at 359 deg moves to a measurement at 1 deg through 0"""
        logger.info("Testing wrapped innovation in the update")
        slopes = ("rising", "falling", "falling")
        s = initial_state(RelativeState(359.0, 2.0), case=1)
        obs = build_observation_model(noiseless_sensor, slopes, s.x.theta_a)

        out = update(s, measure(RelativeState(1.0, 2.0), noiseless_sensor, rng), obs)

        assert abs(angle_diff_deg(out.x.theta_a, 1.0)) < 0.1
        assert out.skipped_updates == 0

    def test_singular_covariance_skips_update(self, noiseless_sensor, rng):
        """Test an ill-conditioned S leaves the state alone and counts the skip"""
        s = EkfState(x=RelativeState(30.0, 2.0), p=np.zeros((2, 2)), q=np.zeros((2, 2)))
        base = build_observation_model(noiseless_sensor, SLOPES_AT_30, 30.0)
        obs = ObservationModel(base.slopes, np.diag([1e-20, 1.0, 1.0, 1.0]))

        out = update(s, measure(RelativeState(40.0, 2.5), noiseless_sensor, rng), obs)

        assert out.x == s.x
        assert out.skipped_updates == 1

    def test_range_floored_after_update(self, noiseless_sensor, rng):
        """Test the corrected range never drops below r_min"""
        s = initial_state(RelativeState(30.0, 0.01), case=2)
        s = EkfState(x=s.x, p=np.diag([25.0, 4.0]), q=s.q)
        obs = build_observation_model(noiseless_sensor, SLOPES_AT_30, 30.0)
        m = measure(RelativeState(30.0, 0.0), noiseless_sensor, rng)

        out = update(s, m._replace(distance=-1.0), obs)

        assert out.x.r_rel >= R_MIN


class TestEkfTracker:
    """Test suite for the tick-driven filter"""

    @pytest.mark.parametrize("case", [1, 2])
    def test_noiseless_still_robots_hold_truth(self, case, noiseless_sensor, rng):
        """Test a filter started at truth stays there when nothing moves"""
        logger.info(f"Testing case {case} on a noiseless static scene")
        truth = RelativeState(30.0, 2.0)
        ticks = _static_ticks(noiseless_sensor, rng, truth, 100)

        run = run_estimator(case, ticks, truth, noiseless_sensor)

        assert len(run.trajectory) == 100
        for est in run.trajectory:
            assert abs(angle_diff_deg(est.theta_a, 30.0)) < 1e-6
            assert est.r_rel == pytest.approx(2.0, abs=1e-6)
        assert run.updates == 100
        assert run.skipped_updates == 0
        assert run.psd_violations == 0

        logger.info(f"Case {case} static scene test passed")

    def test_noisy_static_scene_stays_healthy(self, sensor, rng):
        """Test P stays positive definite and the estimate stays close on noisy data"""
        # 60 deg is far from the pair extremities where readings wrap
        truth = RelativeState(60.0, 2.0)
        ticks = _static_ticks(sensor, rng, truth, 300)

        run = run_estimator(1, ticks, truth, sensor)

        assert run.psd_violations == 0
        assert run.min_eigenvalue > 0.0
        assert abs(angle_diff_deg(run.trajectory[-1].theta_a, 60.0)) < 10.0
        assert run.trajectory[-1].r_rel == pytest.approx(2.0, abs=0.1)

    def test_link_data_held_between_refreshes(self, mocker, noiseless_sensor, rng):
        """Test robot B's data refreshes only every divisor-th tick"""
        logger.info("Testing zero-order hold of robot B's link data")
        spy = mocker.spy(ekf, "predict_case1")
        truth = RelativeState(30.0, 2.0)
        ticks = [
            t._replace(theta_b=10.0 * t.index)
            for t in _static_ticks(noiseless_sensor, rng, truth, 9)
        ]
        tracker = EkfTracker(1, noiseless_sensor, divisor=3)
        tracker.reset(truth)

        for tick in ticks:
            tracker.process(tick)

        held = [call.args[1].theta_b for call in spy.call_args_list]
        assert held == [10.0, 10.0, 10.0, 40.0, 40.0, 40.0, 70.0, 70.0, 70.0]

        logger.info("Zero-order hold test passed")

    def test_divisor_one_refreshes_every_tick(self, mocker, noiseless_sensor, rng):
        """Test divisor 1 passes fresh data at each tick"""
        spy = mocker.spy(ekf, "predict_case1")
        truth = RelativeState(30.0, 2.0)
        ticks = [
            t._replace(theta_b=10.0 * t.index)
            for t in _static_ticks(noiseless_sensor, rng, truth, 4)
        ]

        run_estimator(1, ticks, truth, noiseless_sensor, divisor=1)

        assert [call.args[1].theta_b for call in spy.call_args_list] == [10.0, 20.0, 30.0, 40.0]

    def test_case1_with_still_robot_b_reduces_to_case2(self, sensor, rng):
        """Test Case 1 fed v_b = 0 tracks exactly like Case 2 under the same process noise"""
        logger.info("Testing Case 1 against Case 2 with a stationary robot B")
        truth = RelativeState(45.0, 2.0)
        ticks = [
            t._replace(v_a=0.2, phi_dot_a=10.0, theta_b=123.0)
            for t in _static_ticks(sensor, rng, truth, 200)
        ]

        case1 = run_estimator(1, ticks, truth, sensor, divisor=3, q_case1=1e-3, q_case2=1e-3)
        case2 = run_estimator(2, ticks, truth, sensor, q_case1=1e-3, q_case2=1e-3)

        for a, b in zip(case1.trajectory, case2.trajectory):
            assert a.theta_a == pytest.approx(b.theta_a, abs=1e-9)
            assert a.r_rel == pytest.approx(b.r_rel, abs=1e-12)
        assert case1.skipped_updates == case2.skipped_updates

        logger.info("Case 1 reduction test passed")


    def test_reset_requires_initial_state(self, sensor):
        """Test the filter refuses to start without the true initial state"""
        with pytest.raises(ValueError):
            EkfTracker(1, sensor).reset(None)

    def test_unknown_case(self, sensor):
        """Test a case other than 1 or 2 is rejected"""
        with pytest.raises(ValueError) as exc_info:
            EkfTracker(3, sensor)

        assert "Unknown EKF case" in str(exc_info.value)

    def test_tick_without_slopes(self, sensor, rng):
        """Test a tick missing the slope selection is rejected"""
        tracker = EkfTracker(2, sensor)
        tracker.reset(RelativeState(30.0, 2.0))
        truth = RelativeState(30.0, 2.0)
        tick = _static_ticks(sensor, rng, truth, 1)[0]._replace(slopes=None)

        with pytest.raises(ValueError):
            tracker.process(tick)

    def test_initial_covariance(self):
        """Test the initial covariance and process noise"""
        s = initial_state(RelativeState(0.0, 1.0), case=2)

        assert s.p == pytest.approx(np.diag([25.0, 0.01]))
        assert s.q == pytest.approx(1e-3 * np.eye(2))
        assert s.dt == pytest.approx(1 / 28.0)
        assert math.isclose(initial_state(RelativeState(0.0, 1.0), case=1).q[0, 0], 1e-6)
