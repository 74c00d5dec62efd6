import sys

import numpy as np
import pytest
from loguru import logger

from src.harness import EstimatorScore, RunRecord
from src.scenarios import builtin_scenarios
from src.sim_config import SimulationConfig
from src.uwb_model import SensorModel, default_calibration


# Configure loguru for tests
logger.remove()  # Remove default handler
logger.add(sys.stdout, level="DEBUG")


@pytest.fixture(autouse=True)
def setup_test_environment(monkeypatch, tmp_path):
    """Setup test environment for each test

    Points the default output directory at a per-test temporary directory so
    no test writes into the working tree.
    """
    monkeypatch.setenv("UWB_RELOC_OUTPUT", str(tmp_path / "results"))
    yield


@pytest.fixture(scope="session")
def calibration():
    """Default synthetic calibration set"""
    return default_calibration()


@pytest.fixture(scope="session")
def sensor(calibration):
    """Sensor model with noise enabled"""
    return SensorModel(calibration)


@pytest.fixture(scope="session")
def noiseless_sensor(calibration):
    """Sensor model returning exact readings"""
    return SensorModel(calibration, noise_enabled=False)


@pytest.fixture
def rng():
    """Seeded generator for reproducible draws"""
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def scenarios():
    """Built-in scenario catalog"""
    return builtin_scenarios()


@pytest.fixture
def short_scenario(scenarios):
    """Return a factory for shortened scenario copies

    Usage:
        def test_something(short_scenario):
            scenario = short_scenario("b-circles-a", duration=2.0)
    """

    def _make(scenario_id: str, duration: float = 2.0):
        base = next(s for s in scenarios if s.id == scenario_id)
        return base.model_copy(update={"duration": duration}, deep=True)

    return _make


@pytest.fixture
def config():
    """Default simulation configuration"""
    return SimulationConfig()


@pytest.fixture
def make_record():
    """Return a factory for hand-made run records

    Usage:
        def test_something(make_record):
            record = make_record(sweep_index=2, baseline=3.0, case2=1.0, case1={1: 0.5})
    """

    def _make(
        scenario: str = "both-still",
        sweep_index: int = 0,
        seed: int = 1,
        baseline: float = 2.0,
        case2: float | None = 1.5,
        case1: dict[int, float] | None = None,
        min_range: float = 1.0,
        skipped: int = 0,
    ) -> RunRecord:
        scores = [
            EstimatorScore(
                estimator="baseline", rmse_angle_deg=baseline, rmse_distance_m=baseline / 100
            )
        ]
        if case2 is not None:
            scores.append(
                EstimatorScore(
                    estimator="ekf_case2",
                    rmse_angle_deg=case2,
                    rmse_distance_m=case2 / 100,
                    updates=560,
                    skipped_updates=skipped,
                )
            )
        for divisor, value in (case1 or {}).items():
            scores.append(
                EstimatorScore(
                    estimator="ekf_case1",
                    data_rate_divisor=divisor,
                    rmse_angle_deg=value,
                    rmse_distance_m=value / 100,
                    updates=560,
                )
            )
        return RunRecord(
            scenario=scenario,
            scenario_index=0,
            sweep_index=sweep_index,
            sweep_value=float(sweep_index),
            master_seed=0,
            seed=seed,
            ticks=560,
            effective_rate=28.0,
            min_range_m=min_range,
            scores=scores,
        )

    return _make
