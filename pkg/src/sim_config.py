import json
from pathlib import Path
from typing import Literal, Optional

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.config.constants import (
    CLOSENESS_THRESHOLD_DEG,
    DISTANCE_NOISE_STD,
    EMA_ALPHA,
    ESTIMATOR_RATE_HZ,
    INITIAL_ANGLE_STD_DEG,
    INITIAL_RANGE_STD,
    MAX_DATA_RATE_DIVISOR,
    MIN_DATA_RATE_DIVISOR,
    Q_CASE1,
    Q_CASE2,
    R_MIN,
    SCHEMA_VERSION,
    SIGMA_MAX_DEG,
    SIGMA_MIN_DEG,
    WRAP_PROBABILITY_CEILING,
    WRAP_PROBABILITY_MAX,
)
from src.exceptions import ConfigurationError
from src.uwb_model import SensorModel, default_calibration, load_calibration

EstimatorName = Literal["baseline", "ekf_case1", "ekf_case2"]
ESTIMATOR_NAMES: tuple[EstimatorName, ...] = ("baseline", "ekf_case1", "ekf_case2")


class SensorSettings(BaseModel):
    """UWB noise settings; calibration_file replaces the synthetic tables."""

    model_config = ConfigDict(validate_assignment=True)

    noise_enabled: bool = Field(default=True, description="Inject measurement noise")
    distance_std: float = Field(
        default=DISTANCE_NOISE_STD, gt=0, description="Distance noise std (meters)"
    )
    sigma_min: float = Field(
        default=SIGMA_MIN_DEG, gt=0, description="Synthetic angle std facing a pair"
    )
    sigma_max: float = Field(
        default=SIGMA_MAX_DEG, gt=0, description="Synthetic angle std at the extremities"
    )
    wrap_probability_max: float = Field(
        default=WRAP_PROBABILITY_MAX,
        ge=0,
        le=WRAP_PROBABILITY_CEILING,
        description="Synthetic wrap probability at the extremities",
    )
    calibration_file: Optional[str] = Field(
        default=None, description="JSON calibration document to use instead"
    )


class BaselineSettings(BaseModel):
    model_config = ConfigDict(validate_assignment=True)

    ema_alpha: float = Field(default=EMA_ALPHA, gt=0, le=1, description="EMA factor")
    closeness_threshold: float = Field(
        default=CLOSENESS_THRESHOLD_DEG, gt=0, description="Two-closest agreement (deg)"
    )
    certainty_mode: Literal["normalized", "unnormalized"] = Field(
        default="normalized", description="Slope certainty normalisation"
    )


class EkfSettings(BaseModel):
    model_config = ConfigDict(validate_assignment=True)

    q_case1: float = Field(default=Q_CASE1, gt=0, description="Case 1 process noise")
    q_case2: float = Field(default=Q_CASE2, gt=0, description="Case 2 process noise")
    initial_angle_std: float = Field(default=INITIAL_ANGLE_STD_DEG, gt=0)
    initial_range_std: float = Field(default=INITIAL_RANGE_STD, gt=0)
    r_min: float = Field(default=R_MIN, gt=0, description="Range floor (meters)")


class HarnessSettings(BaseModel):
    model_config = ConfigDict(validate_assignment=True)

    estimator_rate: float = Field(default=ESTIMATOR_RATE_HZ, gt=0, le=1000)
    master_seed: int = Field(default=0, ge=0, description="Seed of the whole batch")
    divisors: list[int] = Field(
        default_factory=lambda: list(range(MIN_DATA_RATE_DIVISOR, MAX_DATA_RATE_DIVISOR + 1))
    )
    estimators: list[EstimatorName] = Field(default_factory=lambda: list(ESTIMATOR_NAMES))
    jobs: int = Field(default=1, ge=1, description="Worker processes for batches")
    scenarios_file: Optional[str] = Field(
        default=None, description="JSON scenario catalog replacing the built-ins"
    )

    @field_validator("divisors")
    @classmethod
    def validate_divisors(cls, v: list[int]) -> list[int]:
        """Validate every divisor is within the protocol range."""
        if not v:
            raise ValueError("at least one data-rate divisor is required")
        for d in v:
            if not MIN_DATA_RATE_DIVISOR <= d <= MAX_DATA_RATE_DIVISOR:
                raise ValueError(
                    f"data-rate divisor must be in [{MIN_DATA_RATE_DIVISOR}, "
                    f"{MAX_DATA_RATE_DIVISOR}], got {d}"
                )
        return sorted(set(v))

    @field_validator("estimators")
    @classmethod
    def validate_estimators(cls, v: list[str]) -> list[str]:
        if not v:
            raise ValueError("at least one estimator is required")
        return [name for name in ESTIMATOR_NAMES if name in v]


class SimulationConfig(BaseModel):
    """Configuration of a simulation campaign with Pydantic validation."""

    model_config = ConfigDict(validate_assignment=True)

    schema_version: int = Field(default=SCHEMA_VERSION)
    sensor: SensorSettings = Field(default_factory=SensorSettings)
    baseline: BaselineSettings = Field(default_factory=BaselineSettings)
    ekf: EkfSettings = Field(default_factory=EkfSettings)
    harness: HarnessSettings = Field(default_factory=HarnessSettings)

    @field_validator("schema_version")
    @classmethod
    def validate_schema_version(cls, v: int) -> int:
        if v != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {v}, expected {SCHEMA_VERSION}")
        return v

    def save_to_file(self, filepath: str | Path):
        """Save configuration to JSON file."""
        with open(filepath, "w") as f:
            f.write(self.model_dump_json(indent=2))

    @classmethod
    def load_from_file(cls, filepath: str | Path) -> "SimulationConfig":
        """
        Load configuration from JSON file.

        Raises:
            ConfigurationError: If the file cannot be read or fails validation
        """
        try:
            with open(filepath, "r") as f:
                data = json.load(f)
            config = cls(**data)
        except json.JSONDecodeError as e:
            raise ConfigurationError(
                f"{filepath}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}"
            ) from e
        except ValidationError as e:
            first = e.errors()[0]
            location = ".".join(str(part) for part in first["loc"])
            raise ConfigurationError(f"{filepath}: {location}: {first['msg']}") from e
        except OSError as e:
            raise ConfigurationError(f"Cannot read configuration {filepath}: {e}") from e
        logger.info(f"Loaded configuration from {filepath}")
        return config

    def build_sensor(self) -> SensorModel:
        """Compile the calibration in use into a sensor model."""
        s = self.sensor
        if s.calibration_file:
            calibration = load_calibration(s.calibration_file)
        else:
            calibration = default_calibration(
                sigma_min=s.sigma_min,
                sigma_max=s.sigma_max,
                wrap_probability_max=s.wrap_probability_max,
            )
        return SensorModel(calibration, noise_enabled=s.noise_enabled, distance_std=s.distance_std)
