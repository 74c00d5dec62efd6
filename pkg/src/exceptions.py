"""Custom exceptions for the relative localization suite.

Every error raised on purpose by this package derives from RelLocError so the
CLI can map them to exit codes in one place.
"""


class RelLocError(Exception):
    """Base exception class for all relative localization errors."""

    pass


class DomainError(RelLocError, ValueError):
    """Raised when a numeric input is outside the domain of an operation."""

    pass


class DegenerateGeometryError(RelLocError):
    """Raised when the two robots occupy the same position."""

    pass


class SingularityError(RelLocError):
    """Raised when the relative range is too small for the relative-state ODE."""

    def __init__(self, message: str, r_rel: float | None = None):
        """
        Initialize singularity error with the offending range.

        Args:
            message: Error message
            r_rel: Relative range that triggered the error (meters)
        """
        super().__init__(message)
        self.r_rel = r_rel


class CalibrationError(RelLocError):
    """Raised when calibration or dispersion data is invalid."""

    def __init__(
        self,
        message: str,
        pair_id: int | None = None,
        bin_index: int | None = None,
        location: str | None = None,
    ):
        """
        Initialize calibration error with the position of the bad entry.

        Args:
            message: Error message
            pair_id: Antenna pair the entry belongs to (1-based)
            bin_index: Dispersion bin index if applicable
            location: Dotted path of the entry inside the calibration document
        """
        super().__init__(message)
        self.pair_id = pair_id
        self.bin_index = bin_index
        self.location = location


class ConfigurationError(RelLocError):
    """Raised when simulation or scenario configuration is invalid."""

    pass


class PairingError(RelLocError):
    """Raised when run records cannot be paired for a comparison."""

    pass


class ReportExistsError(RelLocError):
    """Raised when an output would overwrite an existing report."""

    pass
