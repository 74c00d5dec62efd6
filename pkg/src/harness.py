"""Multirate simulation harness.

Physics runs on a 1 ms grid. Estimators run at about 28 Hz on ticks placed at
the nearest whole millisecond; robot-A odometry and robot-B link data are
sampled at the start of each tick interval and held over it. Robot-B data
reaches the Case 1 filter only every divisor-th tick.

One run covers one (scenario, sweep point): the baseline and the Case 2 filter
run once, the Case 1 filter once per requested divisor, all on the same
measurement stream.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, field_validator

from src.artifacts import trajectory_filename, write_trajectory_csv
from src.config.constants import (
    MAX_DATA_RATE_DIVISOR,
    MIN_DATA_RATE_DIVISOR,
    PHYSICS_STEP_SECONDS,
    PHYSICS_STEPS_PER_SECOND,
    R_MIN,
)
from src.estimator_base import EstimatorTick, RelativeEstimatorBase
from src.estimator_factory import EstimatorFactory
from src.exceptions import RelLocError
from src.geometry import angle_diff_deg
from src.kinematics import (
    RelativeState,
    step_pose,
    step_relative_state,
    true_relative_state,
)
from src.scenarios import Scenario, ScenarioInstance, find_scenario, load_scenarios
from src.sim_config import ESTIMATOR_NAMES, EstimatorName, SimulationConfig
from src.stats import rmse
from src.uwb_model import SensorModel, measure


class RunConfig(BaseModel):
    """One (scenario, sweep point) run and the estimators it feeds."""

    scenario_id: str
    sweep_index: int = Field(ge=0)
    divisors: list[int] = Field(default_factory=lambda: [MIN_DATA_RATE_DIVISOR])
    estimators: list[EstimatorName] = Field(default_factory=lambda: list(ESTIMATOR_NAMES))
    master_seed: int = Field(default=0, ge=0)

    @field_validator("divisors")
    @classmethod
    def validate_divisors(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("at least one data-rate divisor is required")
        for d in v:
            if not MIN_DATA_RATE_DIVISOR <= d <= MAX_DATA_RATE_DIVISOR:
                raise ValueError(
                    f"data-rate divisor must be in [{MIN_DATA_RATE_DIVISOR}, "
                    f"{MAX_DATA_RATE_DIVISOR}], got {d}"
                )
        return sorted(set(v))


class EstimatorScore(BaseModel):
    estimator: EstimatorName
    data_rate_divisor: Optional[int] = None
    rmse_angle_deg: float = Field(ge=0)
    rmse_distance_m: float = Field(ge=0)
    updates: int = 0
    skipped_updates: int = 0
    psd_violations: int = 0
    singular_clamps: int = 0
    trajectory_path: Optional[str] = None


class RunRecord(BaseModel):
    """Outcome of one run: config echo, truth statistics and one score per estimator."""

    scenario: str
    scenario_index: int
    sweep_index: int
    sweep_value: float
    master_seed: int
    seed: int
    ticks: int
    effective_rate: float
    min_range_m: float
    scores: list[EstimatorScore]

    def rows(self) -> list[dict]:
        """Flat rows, one per estimator score, in the records CSV layout."""
        return [
            {
                "scenario": self.scenario,
                "sweep_index": self.sweep_index,
                "sweep_value": self.sweep_value,
                "data_rate_divisor": "" if s.data_rate_divisor is None else s.data_rate_divisor,
                "estimator": s.estimator,
                "seed": self.seed,
                "rmse_angle_deg": s.rmse_angle_deg,
                "rmse_distance_m": s.rmse_distance_m,
                "min_range_m": self.min_range_m,
                "updates": s.updates,
                "skipped_updates": s.skipped_updates,
                "psd_violations": s.psd_violations,
                "trajectory_path": s.trajectory_path or "",
            }
            for s in self.scores
        ]


class Timeline(NamedTuple):
    """Ground truth and estimator inputs of one simulated run."""

    ticks: list[EstimatorTick]
    truth: list[RelativeState]  # at each tick
    initial: RelativeState
    min_range: float


class ConsistencyReport(NamedTuple):
    max_angle_error_deg: float
    max_range_error_m: float
    steps: int


def derive_seed(master_seed: int, scenario_index: int, sweep_index: int) -> int:
    """
    Per-run seed from the batch seed.

    numpy's SeedSequence with spawn_key (scenario_index, sweep_index) makes the
    seed independent of execution order and of the divisors requested.
    """
    sequence = np.random.SeedSequence(entropy=master_seed, spawn_key=(scenario_index, sweep_index))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def tick_schedule(duration: float, rate: float) -> list[int]:
    """Physics step index of every estimator tick, k = 1..round(duration * rate)."""
    count = round(duration * rate)
    return [round(k * PHYSICS_STEPS_PER_SECOND / rate) for k in range(1, count + 1)]


def simulate(
    instance: ScenarioInstance,
    sensor: SensorModel,
    rng: np.random.Generator,
    rate: float,
) -> Timeline:
    """
    Integrate both robots at 1 ms and draw one measurement per estimator tick.

    Raises:
        DegenerateGeometryError: If the robots collide at a tick
    """
    dt = PHYSICS_STEP_SECONDS
    pose_a, pose_b = instance.pose_a.pose(), instance.pose_b.pose()
    initial = true_relative_state(pose_a, pose_b)
    min_range = initial.r_rel

    ticks: list[EstimatorTick] = []
    truth: list[RelativeState] = []
    step = 0
    state = initial
    for k, target in enumerate(tick_schedule(instance.duration, rate), start=1):
        t0 = step * dt
        u_a = instance.control_a.at(t0)
        u_b = instance.control_b.at(t0)
        theta_b = state.theta_b(pose_a.phi, pose_b.phi)
        interval = target - step

        while step < target:
            t = step * dt
            pose_a = step_pose(pose_a, instance.control_a.at(t), dt)
            pose_b = step_pose(pose_b, instance.control_b.at(t), dt)
            min_range = min(min_range, math.hypot(pose_b.x - pose_a.x, pose_b.y - pose_a.y))
            step += 1

        state = true_relative_state(pose_a, pose_b)
        truth.append(state)
        ticks.append(
            EstimatorTick(
                index=k,
                t=step * dt,
                dt=interval * dt,
                measurement=measure(state, sensor, rng),
                v_a=u_a.v,
                phi_dot_a=u_a.phi_dot,
                v_b=u_b.v,
                theta_b=theta_b,
            )
        )
    return Timeline(ticks, truth, initial, min_range)


def check_consistency(instance: ScenarioInstance, r_min: float = R_MIN) -> ConsistencyReport:
    """
    Compare the relative state from integrated poses with direct integration
    of the relative-state ODE, at every physics step.
    """
    dt = PHYSICS_STEP_SECONDS
    pose_a, pose_b = instance.pose_a.pose(), instance.pose_b.pose()
    rel = true_relative_state(pose_a, pose_b)
    steps = round(instance.duration * PHYSICS_STEPS_PER_SECOND)
    max_angle = max_range = 0.0
    for step in range(steps):
        t = step * dt
        u_a = instance.control_a.at(t)
        u_b = instance.control_b.at(t)
        theta_b = rel.theta_b(pose_a.phi, pose_b.phi)
        rel = step_relative_state(rel, u_a.v, u_b.v, u_a.phi_dot, theta_b, dt, r_min)
        pose_a = step_pose(pose_a, u_a, dt)
        pose_b = step_pose(pose_b, u_b, dt)
        truth = true_relative_state(pose_a, pose_b)
        max_angle = max(max_angle, abs(angle_diff_deg(rel.theta_a, truth.theta_a)))
        max_range = max(max_range, abs(rel.r_rel - truth.r_rel))
    logger.debug(
        f"{instance.scenario_id}[{instance.sweep_index}]: ODE vs poses "
        f"max {max_angle:.4f} deg / {max_range * 1000:.3f} mm"
    )
    return ConsistencyReport(max_angle, max_range, steps)


def _score(
    estimator: RelativeEstimatorBase,
    estimates: list[RelativeState],
    timeline: Timeline,
    divisor: Optional[int],
) -> tuple[EstimatorScore, list[RelativeState]]:
    angle_errors = [angle_diff_deg(e.theta_a, t.theta_a) for e, t in zip(estimates, timeline.truth)]
    range_errors = [e.r_rel - t.r_rel for e, t in zip(estimates, timeline.truth)]
    score = EstimatorScore(
        estimator=estimator.name,
        data_rate_divisor=divisor,
        rmse_angle_deg=rmse(angle_errors),
        rmse_distance_m=rmse(range_errors),
        updates=estimator.updates,
        skipped_updates=estimator.skipped_updates,
        psd_violations=estimator.psd_violations,
        singular_clamps=estimator.singular_clamps,
    )
    return score, estimates


def _drive(estimator: RelativeEstimatorBase, ticks: list[EstimatorTick], initial: RelativeState):
    estimator.reset(initial)
    return [estimator.process(tick) for tick in ticks]


def run_one(
    cfg: RunConfig,
    config: Optional[SimulationConfig] = None,
    scenarios: Optional[list[Scenario]] = None,
    sensor: Optional[SensorModel] = None,
    trajectory_dir: Optional[Path] = None,
) -> RunRecord:
    """
    Simulate one scenario at one sweep point and score the requested estimators.

    Args:
        cfg: Scenario, sweep point, divisors, estimators and master seed
        config: Simulation configuration; defaults apply when omitted
        scenarios: Catalog to look the scenario up in; config's catalog when omitted
        sensor: Prebuilt sensor model; built from config when omitted
        trajectory_dir: Directory receiving one trajectory CSV per estimator

    Returns:
        The run record, deterministic for a given master seed

    Raises:
        ConfigurationError: If the scenario is unknown or violates its invariants
    """
    config = config or SimulationConfig()
    if scenarios is None:
        scenarios = load_scenarios(config.harness.scenarios_file)
    sensor = sensor or config.build_sensor()
    scenario_index, scenario = find_scenario(scenarios, cfg.scenario_id)
    instance = scenario.instantiate(cfg.sweep_index)

    seed = derive_seed(cfg.master_seed, scenario_index, cfg.sweep_index)
    rng = np.random.default_rng(seed)
    rate = config.harness.estimator_rate
    logger.debug(f"Run {cfg.scenario_id}[{cfg.sweep_index}] seed {seed}")
    timeline = simulate(instance, sensor, rng, rate)

    results: list[tuple[EstimatorScore, list[RelativeState]]] = []

    # the filters observe through the slopes the baseline selected
    baseline = EstimatorFactory.create_estimator("baseline", sensor, config)
    baseline.reset(timeline.initial)
    ticks: list[EstimatorTick] = []
    baseline_estimates: list[RelativeState] = []
    for tick in timeline.ticks:
        baseline_estimates.append(baseline.process(tick))
        ticks.append(tick._replace(slopes=baseline.last_selection.slopes))
    if "baseline" in cfg.estimators:
        results.append(_score(baseline, baseline_estimates, timeline, None))

    if "ekf_case2" in cfg.estimators:
        case2 = EstimatorFactory.create_estimator("ekf_case2", sensor, config)
        results.append(_score(case2, _drive(case2, ticks, timeline.initial), timeline, None))

    if "ekf_case1" in cfg.estimators:
        for divisor in cfg.divisors:
            case1 = EstimatorFactory.create_estimator("ekf_case1", sensor, config, divisor)
            estimates = _drive(case1, ticks, timeline.initial)
            results.append(_score(case1, estimates, timeline, divisor))

    scores = []
    for score, estimates in results:
        if trajectory_dir is not None:
            path = write_trajectory(
                trajectory_dir, cfg, score, timeline, estimates, seed
            )
            score = score.model_copy(update={"trajectory_path": str(path)})
        scores.append(score)

    record = RunRecord(
        scenario=cfg.scenario_id,
        scenario_index=scenario_index,
        sweep_index=cfg.sweep_index,
        sweep_value=instance.sweep_value,
        master_seed=cfg.master_seed,
        seed=seed,
        ticks=len(timeline.ticks),
        effective_rate=len(timeline.ticks) / instance.duration,
        min_range_m=timeline.min_range,
        scores=scores,
    )
    logger.debug(
        f"Run {cfg.scenario_id}[{cfg.sweep_index}] done: "
        + ", ".join(
            f"{s.estimator}{'' if s.data_rate_divisor is None else '/' + str(s.data_rate_divisor)}"
            f"={s.rmse_angle_deg:.2f}deg"
            for s in scores
        )
    )
    return record


def write_trajectory(
    directory: Path,
    cfg: RunConfig,
    score: EstimatorScore,
    timeline: Timeline,
    estimates: list[RelativeState],
    seed: int,
) -> Path:
    case = {"baseline": "baseline", "ekf_case1": "1", "ekf_case2": "2"}[score.estimator]
    path = Path(directory) / trajectory_filename(
        cfg.scenario_id, cfg.sweep_index, score.estimator, score.data_rate_divisor
    )
    write_trajectory_csv(
        path,
        [tick.t for tick in timeline.ticks],
        timeline.truth,
        estimates,
        case=case,
        divisor=score.data_rate_divisor,
        seed=seed,
    )
    return path


class BatchResult(NamedTuple):
    records: list[RunRecord]
    failures: list[tuple[RunConfig, str]]


def _run_worker(
    cfg: RunConfig, config: SimulationConfig, scenarios: list[Scenario], trajectory_dir
) -> RunRecord:
    return run_one(cfg, config, scenarios, trajectory_dir=trajectory_dir)


def batch_configs(
    scenarios: list[Scenario], config: SimulationConfig, master_seed: Optional[int] = None
) -> list[RunConfig]:
    """Cartesian product of scenarios and sweep points, in canonical order."""
    h = config.harness
    seed = h.master_seed if master_seed is None else master_seed
    return [
        RunConfig(
            scenario_id=s.id,
            sweep_index=j,
            divisors=h.divisors,
            estimators=h.estimators,
            master_seed=seed,
        )
        for s in scenarios
        for j in range(len(s.sweep.points))
    ]


def _failure(cfg: RunConfig, e: Exception) -> tuple[RunConfig, str]:
    if isinstance(e, RelLocError):
        logger.error(f"Run {cfg.scenario_id}[{cfg.sweep_index}] failed: {e}")
    else:
        logger.opt(exception=e).error(f"Run {cfg.scenario_id}[{cfg.sweep_index}] crashed: {e!r}")
    return cfg, str(e) or type(e).__name__


def run_batch(
    configs: list[RunConfig],
    config: Optional[SimulationConfig] = None,
    scenarios: Optional[list[Scenario]] = None,
    jobs: Optional[int] = None,
    trajectory_dir: Optional[Path] = None,
) -> BatchResult:
    """
    Run many configurations, in parallel when jobs > 1.

    A failing run is logged and listed; the remaining runs complete. Records
    come back sorted by (scenario index, sweep index) whatever the completion
    order.
    """
    config = config or SimulationConfig()
    if scenarios is None:
        scenarios = load_scenarios(config.harness.scenarios_file)
    jobs = jobs or config.harness.jobs
    jobs = max(1, min(jobs, os.cpu_count() or 1, len(configs) or 1))
    logger.info(f"Running {len(configs)} simulations on {jobs} worker(s)")

    records: list[RunRecord] = []
    failures: list[tuple[RunConfig, str]] = []
    if jobs == 1:
        sensor = config.build_sensor()
        for i, cfg in enumerate(configs, start=1):
            try:
                records.append(run_one(cfg, config, scenarios, sensor, trajectory_dir))
            except Exception as e:
                failures.append(_failure(cfg, e))
            if i % 10 == 0:
                logger.info(f"{i}/{len(configs)} simulations done")
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(_run_worker, cfg, config, scenarios, trajectory_dir): cfg
                for cfg in configs
            }
            for i, future in enumerate(as_completed(futures), start=1):
                cfg = futures[future]
                try:
                    records.append(future.result())
                except Exception as e:
                    failures.append(_failure(cfg, e))
                if i % 10 == 0:
                    logger.info(f"{i}/{len(configs)} simulations done")

    records.sort(key=lambda r: (r.scenario_index, r.sweep_index))
    position = {s.id: k for k, s in enumerate(scenarios)}
    failures.sort(key=lambda f: (position.get(f[0].scenario_id, len(position)), f[0].sweep_index))
    logger.info(f"Batch finished: {len(records)} succeeded, {len(failures)} failed")
    return BatchResult(records, failures)
