"""Motion scenarios of the two robots and their parameter sweeps.

A scenario declares initial poses, one control program per robot and ten sweep
points. Each sweep point overrides a few numeric fields addressed by dotted
paths (``"control_b.v"``, ``"pose_b.x"``); instantiating a sweep point yields
a validated ``ScenarioInstance`` that the harness can simulate.
"""

import bisect
import json
import math
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from loguru import logger
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    ValidationError,
    field_validator,
    model_validator,
)

from src.config.constants import (
    MIN_INITIAL_SEPARATION,
    OMEGA_MAX_DEG,
    SCENARIO_DURATION_SECONDS,
    SCHEMA_VERSION,
    V_MAX,
)
from src.exceptions import ConfigurationError
from src.kinematics import ControlInput, Pose2D

ControlKind = Literal["constant", "ramp", "sinusoid", "spiral", "piecewise", "random_piecewise"]


class PoseSpec(BaseModel):
    x: float = 0.0
    y: float = 0.0
    phi: float = Field(default=0.0, description="Heading in degrees")

    def pose(self) -> Pose2D:
        return Pose2D.create(self.x, self.y, self.phi)


class Segment(BaseModel):
    t_start: float = Field(ge=0)
    v: float
    phi_dot: float


class ControlProgram(BaseModel):
    """
    Time function u(t) = (v, phi_dot) of one robot.

    constant: v, phi_dot
    ramp: v + accel * t, phi_dot
    sinusoid: v, phi_dot + amplitude * sin(2 pi frequency t)
    spiral: v, phi_dot * (1 + growth * t)
    piecewise: explicit segments, each held from its t_start
    random_piecewise: segments of segment_duration drawn uniformly from
        [0, v] x [-amplitude, amplitude] with numpy's generator seeded by seed
    """

    model_config = ConfigDict(frozen=True)

    kind: ControlKind = "constant"
    v: float = 0.0
    phi_dot: float = 0.0
    accel: float = 0.0
    amplitude: float = 0.0
    frequency: float = Field(default=0.0, ge=0)
    growth: float = 0.0
    segments: list[Segment] = Field(default_factory=list)
    seed: int = Field(default=0, ge=0)
    segment_duration: float = Field(default=2.0, gt=0)

    _expanded: list[Segment] = PrivateAttr(default_factory=list)
    _starts: list[float] = PrivateAttr(default_factory=list)

    @field_validator("segments")
    @classmethod
    def validate_segments(cls, v: list[Segment]) -> list[Segment]:
        starts = [s.t_start for s in v]
        if starts != sorted(starts):
            raise ValueError("segments must be sorted by t_start")
        return v

    @model_validator(mode="after")
    def validate_piecewise(self) -> "ControlProgram":
        if self.kind == "piecewise" and not self.segments:
            raise ValueError("piecewise program needs at least one segment")
        return self

    def model_post_init(self, __context: Any) -> None:
        if self.kind == "piecewise":
            expanded = list(self.segments)
        elif self.kind == "random_piecewise":
            expanded = self._random_segments(SCENARIO_DURATION_SECONDS)
        else:
            expanded = []
        self._set_segments(expanded)

    def _set_segments(self, expanded: list[Segment]) -> None:
        self._expanded = expanded
        self._starts = [s.t_start for s in expanded]

    def _cover(self, t: float) -> None:
        """Extend random segments so they reach past t, whatever the scenario duration."""
        if self.kind != "random_piecewise":
            return
        if t > self._starts[-1] + self.segment_duration:
            # draws are sequential, so the longer list keeps the same prefix
            self._set_segments(self._random_segments(t + self.segment_duration))

    def _random_segments(self, duration: float) -> list[Segment]:
        rng = np.random.default_rng(self.seed)
        count = math.ceil(duration / self.segment_duration)
        return [
            Segment(
                t_start=k * self.segment_duration,
                v=float(rng.uniform(0.0, self.v)),
                phi_dot=float(rng.uniform(-self.amplitude, self.amplitude)),
            )
            for k in range(count)
        ]

    def at(self, t: float) -> ControlInput:
        """Control input at time t (seconds)."""
        if self.kind == "constant":
            return ControlInput(self.v, self.phi_dot)
        if self.kind == "ramp":
            return ControlInput(self.v + self.accel * t, self.phi_dot)
        if self.kind == "sinusoid":
            return ControlInput(
                self.v,
                self.phi_dot + self.amplitude * math.sin(2.0 * math.pi * self.frequency * t),
            )
        if self.kind == "spiral":
            return ControlInput(self.v, self.phi_dot * (1.0 + self.growth * t))
        # piecewise kinds; before the first start the first segment applies
        self._cover(t)
        i = max(bisect.bisect_right(self._starts, t) - 1, 0)
        segment = self._expanded[i]
        return ControlInput(segment.v, segment.phi_dot)

    def peak(self, duration: float) -> tuple[float, float]:
        """Largest |v| and |phi_dot| reached over [0, duration]."""
        if self.kind == "ramp":
            return max(abs(self.v), abs(self.v + self.accel * duration)), abs(self.phi_dot)
        if self.kind == "sinusoid":
            return abs(self.v), abs(self.phi_dot) + abs(self.amplitude)
        if self.kind == "spiral":
            return abs(self.v), abs(self.phi_dot) * max(1.0, abs(1.0 + self.growth * duration))
        self._cover(duration)
        if self._expanded:
            active = [s for s in self._expanded if s.t_start <= duration] or self._expanded[:1]
            return max(abs(s.v) for s in active), max(abs(s.phi_dot) for s in active)
        return abs(self.v), abs(self.phi_dot)


class SweepPoint(BaseModel):
    value: float = Field(description="Value of the swept parameter")
    overrides: dict[str, float] = Field(
        default_factory=dict, description="Dotted field path -> value"
    )


class Sweep(BaseModel):
    name: str
    points: list[SweepPoint] = Field(min_length=1)


class ScenarioInstance(BaseModel):
    """One fully specified simulation: a scenario at one sweep point."""

    scenario_id: str
    sweep_index: int
    sweep_value: float
    duration: float
    pose_a: PoseSpec
    pose_b: PoseSpec
    control_a: ControlProgram
    control_b: ControlProgram

    def check(self, v_max: float = V_MAX, omega_max: float = OMEGA_MAX_DEG) -> None:
        """
        Check robot limits and the initial separation.

        Raises:
            ConfigurationError: If a control program leaves the limits or the robots start too close
        """
        for robot, program in (("A", self.control_a), ("B", self.control_b)):
            v_peak, omega_peak = program.peak(self.duration)
            if v_peak > v_max + 1e-12 or omega_peak > omega_max + 1e-12:
                raise ConfigurationError(
                    f"{self.scenario_id}[{self.sweep_index}]: robot {robot} reaches "
                    f"|v|={v_peak:.3g} m/s, |phi_dot|={omega_peak:.3g} deg/s "
                    f"(limits {v_max} m/s, {omega_max} deg/s)"
                )
        separation = math.hypot(self.pose_b.x - self.pose_a.x, self.pose_b.y - self.pose_a.y)
        if separation < MIN_INITIAL_SEPARATION:
            raise ConfigurationError(
                f"{self.scenario_id}[{self.sweep_index}]: initial separation "
                f"{separation:.3f} m below {MIN_INITIAL_SEPARATION} m"
            )


class Scenario(BaseModel):
    model_config = ConfigDict(validate_assignment=True)

    id: str = Field(min_length=1)
    description: str = ""
    duration: float = Field(default=SCENARIO_DURATION_SECONDS, gt=0)
    pose_a: PoseSpec = Field(default_factory=PoseSpec)
    pose_b: PoseSpec
    control_a: ControlProgram = Field(default_factory=ControlProgram)
    control_b: ControlProgram = Field(default_factory=ControlProgram)
    sweep: Sweep

    def instantiate(self, sweep_index: int) -> ScenarioInstance:
        """
        Apply one sweep point's overrides and validate the result.

        Raises:
            ConfigurationError: On a bad index, an unknown override path or a limit violation
        """
        if not 0 <= sweep_index < len(self.sweep.points):
            raise ConfigurationError(
                f"{self.id}: sweep index {sweep_index} outside [0, {len(self.sweep.points) - 1}]"
            )
        point = self.sweep.points[sweep_index]
        data = self.model_dump(include={"duration", "pose_a", "pose_b", "control_a", "control_b"})
        for path, value in point.overrides.items():
            _set_path(data, path, value, self.id)
        try:
            instance = ScenarioInstance(
                scenario_id=self.id,
                sweep_index=sweep_index,
                sweep_value=point.value,
                **data,
            )
        except ValidationError as e:
            raise ConfigurationError(f"{self.id}[{sweep_index}]: {e}") from e
        instance.check()
        return instance


def _set_path(data: dict[str, Any], path: str, value: float, scenario_id: str) -> None:
    *parents, leaf = path.split(".")
    node = data
    for key in parents:
        if not isinstance(node.get(key), dict):
            raise ConfigurationError(f"{scenario_id}: unknown override path '{path}'")
        node = node[key]
    if leaf not in node:
        raise ConfigurationError(f"{scenario_id}: unknown override path '{path}'")
    node[leaf] = value


class ScenarioCatalog(BaseModel):
    schema_version: int = SCHEMA_VERSION
    scenarios: list[Scenario]

    @field_validator("scenarios")
    @classmethod
    def validate_unique_ids(cls, v: list[Scenario]) -> list[Scenario]:
        ids = [s.id for s in v]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise ValueError(f"duplicate scenario ids: {', '.join(duplicates)}")
        return v


def save_catalog(scenarios: list[Scenario], filepath: str | Path) -> None:
    """Save a scenario catalog to JSON file."""
    catalog = ScenarioCatalog(scenarios=scenarios)
    Path(filepath).write_text(catalog.model_dump_json(indent=2))
    logger.info(f"Scenario catalog saved to {filepath}")


def load_catalog(filepath: str | Path) -> list[Scenario]:
    """
    Load a scenario catalog from JSON file.

    Raises:
        ConfigurationError: If the file cannot be read or fails validation
    """
    try:
        data = json.loads(Path(filepath).read_text())
        catalog = ScenarioCatalog.model_validate(data)
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"{filepath}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"
        ) from e
    except ValidationError as e:
        first = e.errors()[0]
        location = ".".join(str(part) for part in first["loc"])
        raise ConfigurationError(f"{filepath}: {location}: {first['msg']}") from e
    except OSError as e:
        raise ConfigurationError(f"Cannot read scenario catalog {filepath}: {e}") from e
    if catalog.schema_version != SCHEMA_VERSION:
        raise ConfigurationError(f"{filepath}: unsupported schema_version {catalog.schema_version}")
    logger.info(f"Loaded {len(catalog.scenarios)} scenarios from {filepath}")
    return catalog.scenarios


def find_scenario(scenarios: list[Scenario], scenario_id: str) -> tuple[int, Scenario]:
    """
    Look a scenario up by id.

    Returns:
        (catalog index, scenario)

    Raises:
        ConfigurationError: If no scenario has this id
    """
    for i, s in enumerate(scenarios):
        if s.id == scenario_id:
            return i, s
    known = ", ".join(s.id for s in scenarios)
    raise ConfigurationError(f"Unknown scenario '{scenario_id}' (known: {known})")


# Built-in catalog -----------------------------------------------------------


def _points(values: list[float], **paths: Any) -> list[SweepPoint]:
    """Sweep points setting each path to a function of the swept value."""
    return [
        SweepPoint(
            value=round(value, 6),
            overrides={
                path.replace("__", "."): round(fn(value), 9) for path, fn in paths.items()
            },
        )
        for value in values
    ]


def _steps(start: float, step: float, count: int = 10) -> list[float]:
    return [start + k * step for k in range(count)]


def _turn_rate(v: float, radius: float) -> float:
    """Angular velocity (deg/s) of a circle of the given radius at speed v."""
    return math.degrees(v / radius)


def builtin_scenarios() -> list[Scenario]:
    """The fourteen built-in motion scenarios, each with ten sweep points."""
    circle_v = 0.4
    spiral_r0 = 1.5
    return [
        Scenario(
            id="both-still",
            description="Both robots standing still",
            pose_b=PoseSpec(x=0.5, y=0.8),
            sweep=Sweep(name="x_b", points=_points(_steps(0.5, 0.5), pose_b__x=lambda x: x)),
        ),
        Scenario(
            id="b-straight",
            description="A still, B drives a straight line past A",
            pose_b=PoseSpec(x=-3.0, y=1.5),
            control_b=ControlProgram(v=0.05),
            sweep=Sweep(name="v_b", points=_points(_steps(0.05, 0.05), control_b__v=lambda v: v)),
        ),
        Scenario(
            id="b-circles-a",
            description="A still, B drives a circle centred on A",
            pose_b=PoseSpec(x=1.0, phi=90.0),
            control_b=ControlProgram(v=circle_v, phi_dot=_turn_rate(circle_v, 1.0)),
            sweep=Sweep(
                name="radius",
                points=_points(
                    _steps(1.0, 0.25),
                    pose_b__x=lambda r: r,
                    control_b__phi_dot=lambda r: _turn_rate(circle_v, r),
                ),
            ),
        ),
        Scenario(
            id="parallel",
            description="Both robots drive parallel straight lines",
            pose_b=PoseSpec(y=0.5),
            control_a=ControlProgram(v=0.3),
            control_b=ControlProgram(v=0.3),
            sweep=Sweep(
                name="lateral_separation",
                points=_points(_steps(0.5, 0.25), pose_b__y=lambda d: d),
            ),
        ),
        Scenario(
            id="converging",
            description="Straight lines converging toward a common point",
            pose_a=PoseSpec(phi=45.0),
            pose_b=PoseSpec(x=6.0, phi=135.0),
            control_a=ControlProgram(v=0.02),
            control_b=ControlProgram(v=0.02),
            sweep=Sweep(
                name="speed",
                points=_points(
                    _steps(0.02, 0.02), control_a__v=lambda v: v, control_b__v=lambda v: v
                ),
            ),
        ),
        Scenario(
            id="diverging",
            description="Straight lines moving apart",
            pose_a=PoseSpec(phi=180.0),
            pose_b=PoseSpec(x=1.0, y=0.5),
            control_a=ControlProgram(v=0.05),
            control_b=ControlProgram(v=0.05),
            sweep=Sweep(
                name="speed",
                points=_points(
                    _steps(0.05, 0.05), control_a__v=lambda v: v, control_b__v=lambda v: v
                ),
            ),
        ),
        Scenario(
            id="a-straight-b-circle",
            description="A drives straight, B circles the origin",
            pose_a=PoseSpec(x=-3.0, phi=90.0),
            pose_b=PoseSpec(x=2.0, phi=90.0),
            control_a=ControlProgram(v=0.1),
            control_b=ControlProgram(v=0.15, phi_dot=_turn_rate(0.15, 2.0)),
            sweep=Sweep(
                name="v_b",
                points=_points(
                    [0.15 + k * 0.35 / 9 for k in range(10)],
                    control_b__v=lambda v: v,
                    control_b__phi_dot=lambda v: _turn_rate(v, 2.0),
                ),
            ),
        ),
        Scenario(
            id="concentric-circles",
            description="Both robots circle the same centre",
            pose_a=PoseSpec(x=1.0, phi=90.0),
            pose_b=PoseSpec(x=2.0, phi=90.0),
            control_a=ControlProgram(v=0.2, phi_dot=_turn_rate(0.2, 1.0)),
            control_b=ControlProgram(v=0.3, phi_dot=_turn_rate(0.3, 2.0)),
            sweep=Sweep(
                name="radius_b",
                points=_points(
                    _steps(2.0, 0.25),
                    pose_b__x=lambda r: r,
                    control_b__phi_dot=lambda r: _turn_rate(0.3, r),
                ),
            ),
        ),
        Scenario(
            id="spiral",
            description="Both robots spiral around each other",
            pose_a=PoseSpec(x=-spiral_r0, phi=-90.0),
            pose_b=PoseSpec(x=spiral_r0, phi=90.0),
            control_a=ControlProgram(
                kind="spiral", v=0.1, phi_dot=_turn_rate(0.1, spiral_r0), growth=0.03
            ),
            control_b=ControlProgram(
                kind="spiral", v=0.1, phi_dot=_turn_rate(0.1, spiral_r0), growth=0.03
            ),
            sweep=Sweep(
                name="speed",
                points=_points(
                    _steps(0.1, 0.02),
                    control_a__v=lambda v: v,
                    control_b__v=lambda v: v,
                    control_a__phi_dot=lambda v: _turn_rate(v, spiral_r0),
                    control_b__phi_dot=lambda v: _turn_rate(v, spiral_r0),
                ),
            ),
        ),
        Scenario(
            id="a-spins",
            description="A spins in place, B still",
            pose_b=PoseSpec(x=2.0, y=1.0),
            control_a=ControlProgram(phi_dot=10.0),
            sweep=Sweep(
                name="phi_dot_a", points=_points(_steps(10.0, 10.0), control_a__phi_dot=lambda w: w)
            ),
        ),
        Scenario(
            id="accelerating-pass",
            description="B accelerates from rest along a straight line past A",
            pose_b=PoseSpec(x=-4.0, y=1.0),
            control_b=ControlProgram(kind="ramp", accel=0.01),
            sweep=Sweep(
                name="accel_b", points=_points(_steps(0.01, 0.01), control_b__accel=lambda a: a)
            ),
        ),
        Scenario(
            id="oscillating-heading",
            description="A drives with a sinusoidal turn rate, B still",
            pose_b=PoseSpec(x=1.0, y=-3.0),
            control_a=ControlProgram(kind="sinusoid", v=0.2, amplitude=30.0, frequency=0.05),
            sweep=Sweep(
                name="frequency",
                points=_points(_steps(0.05, 0.05), control_a__frequency=lambda f: f),
            ),
        ),
        Scenario(
            id="slow-approach",
            description="B approaches A head-on down to about 0.3 m",
            pose_b=PoseSpec(x=0.5, phi=180.0),
            control_b=ControlProgram(v=0.01),
            sweep=Sweep(
                name="initial_distance",
                points=_points(
                    _steps(0.5, 0.1),
                    pose_b__x=lambda d: d,
                    control_b__v=lambda d: (d - 0.3) / SCENARIO_DURATION_SECONDS,
                ),
            ),
        ),
        Scenario(
            id="random-walk",
            description="Both robots follow seeded random piecewise-constant controls",
            pose_b=PoseSpec(x=5.0, phi=180.0),
            control_a=ControlProgram(kind="random_piecewise", v=0.1, amplitude=30.0, seed=0),
            control_b=ControlProgram(kind="random_piecewise", v=0.1, amplitude=30.0, seed=100),
            sweep=Sweep(
                name="seed",
                points=_points(
                    [float(k) for k in range(10)],
                    control_a__seed=lambda s: s,
                    control_b__seed=lambda s: s + 100,
                ),
            ),
        ),
    ]


def load_scenarios(scenarios_file: Optional[str] = None) -> list[Scenario]:
    """Catalog from a JSON file when given, otherwise the built-ins."""
    if scenarios_file:
        return load_catalog(scenarios_file)
    return builtin_scenarios()
