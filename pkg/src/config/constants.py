"""Application-wide constants and default values.

This module centralizes the physical, sensor and protocol constants used
throughout the simulator. Angles are in degrees unless the name says
otherwise.
"""

# Timing
PHYSICS_STEP_SECONDS = 0.001
"""Fixed integration step of the robot physics (in seconds)."""

PHYSICS_STEPS_PER_SECOND = 1000
"""Number of physics steps per simulated second."""

ESTIMATOR_RATE_HZ = 28.0
"""Rate at which the robots localize each other and the estimators run (in Hz).

Ticks are placed on the 1 ms grid at the nearest whole millisecond, so
consecutive ticks are 35 or 36 ms apart.
"""

SCENARIO_DURATION_SECONDS = 20.0
"""Default duration of one simulated scenario (in seconds)."""

MIN_DATA_RATE_DIVISOR = 1
MAX_DATA_RATE_DIVISOR = 10
"""Robot-B link refreshes every n-th estimator tick, n in [1, 10]."""

# Robot limits
V_MAX = 2.0
"""Maximum absolute linear velocity of a robot (in m/s)."""

OMEGA_MAX_DEG = 180.0
"""Maximum absolute angular velocity of a robot (in deg/s)."""

R_MIN = 1e-3
"""Range floor below which the relative-state ODE is singular (in meters)."""

MIN_INITIAL_SEPARATION = 0.3
"""Minimum distance between the robots at the start of a scenario (in meters)."""

# UWB sensor
DISTANCE_NOISE_STD = 0.0343
"""Standard deviation of the two-way-ranging distance noise (in meters)."""

ANTENNA_SPACING = 0.027
"""Distance between the antennas of the three-node assembly (in meters).

Documentation only: the sensor is modelled at the angle level.
"""

PAIR_OFFSETS_DEG = (0.0, 120.0, 240.0)
"""Orientation of the baseline normal of antenna pairs 1, 2 and 3."""

DISPERSION_BIN_WIDTH_DEG = 3.66
"""Width of one dispersion bin of the real angle (100 samples every 3.66 deg)."""

SIGMA_MIN_DEG = 3.0
"""Angle noise standard deviation facing a pair (pair-local angle 0)."""

SIGMA_MAX_DEG = 15.0
"""Angle noise standard deviation at a pair's +/-90 deg extremities."""

WRAP_PROBABILITY_MAX = 0.15
"""Largest probability of a reading jumping to the opposite extremity."""

WRAP_PROBABILITY_CEILING = 0.2
"""Upper bound accepted for any bin's wrap probability."""

WRAP_ONSET_DEG = 60.0
"""Pair-local angle magnitude below which wrap events never happen."""

NOISELESS_ANGLE_STD = 1e-3
"""Angle standard deviation the filters assume when noise is disabled."""

NOISELESS_DISTANCE_STD = 1e-5
"""Distance standard deviation the filters assume when noise is disabled."""

# Baseline estimator
EMA_ALPHA = 0.3
"""Smoothing factor of the baseline's exponential moving average."""

CLOSENESS_THRESHOLD_DEG = 10.0
"""Two fused angles closer than this are averaged without the third."""

LOW_CERTAINTY = 0.05
"""Certainty assigned to candidates whose reading had to be clamped."""

# EKF
Q_CASE1 = 1e-6
"""Diagonal process noise of the complete (Case 1) model."""

Q_CASE2 = 1e-3
"""Diagonal process noise of the local-only (Case 2) model."""

INITIAL_ANGLE_STD_DEG = 5.0
INITIAL_RANGE_STD = 0.1
"""Initial covariance diag((5 deg)^2, (0.1 m)^2)."""

RANGE_INFLATION_ON_CLAMP = 10.0
"""Factor applied to the range variance when the range is clamped at R_MIN."""

PSD_TOLERANCE = -1e-9
"""Smallest eigenvalue of P still considered positive semi-definite."""

INNOVATION_CONDITION_LIMIT = 1e12
"""Innovation covariances with a larger condition number skip the update."""

# Statistics
EXACT_WILCOXON_MAX_N = 25
"""Largest effective sample size for which exact p-values are enumerated."""

SIGNIFICANCE_LEVEL = 0.05
"""Alpha used to reject the null hypothesis in reports."""

WHISKER_IQR_FACTOR = 1.5
"""Boxplot whiskers extend to the last sample within 1.5 IQR of the box."""

SHORT_RANGE_THRESHOLD = 0.3
"""Runs whose minimum true range is below this are reported separately."""

# Persistence
SCHEMA_VERSION = 1
"""Version of every JSON document and CSV layout written by the suite."""

OUTPUT_DIR_ENV_VAR = "UWB_RELOC_OUTPUT"
"""Environment variable holding the default output directory."""

DEFAULT_OUTPUT_DIR = "results"
"""Output directory used when neither the flag nor the variable is set."""

RECORD_CSV_COLUMNS = (
    "scenario",
    "sweep_index",
    "sweep_value",
    "data_rate_divisor",
    "estimator",
    "seed",
    "rmse_angle_deg",
    "rmse_distance_m",
    "min_range_m",
    "updates",
    "skipped_updates",
    "psd_violations",
    "trajectory_path",
)
"""Frozen column order of the run records CSV."""

TRAJECTORY_CSV_COLUMNS = (
    "t",
    "theta_true",
    "r_true",
    "theta_est",
    "r_est",
    "case",
    "data_rate_divisor",
    "seed",
)
"""Frozen column order of the per-tick trajectory CSV."""

BOXPLOT_CSV_COLUMNS = (
    "estimator",
    "metric",
    "data_rate_divisor",
    "n",
    "median",
    "q1",
    "q3",
    "whisker_low",
    "whisker_high",
    "outliers",
)
"""Frozen column order of the boxplot summary CSV."""
