"""Exception types shared across the package.

All input-validation failures derive from ValueError so callers using
standard sklearn-style error handling catch them uniformly.
"""


class DimensionError(ValueError):
    """Arrays or points with incompatible dimensions."""


class ParameterError(ValueError):
    """Scalar parameter outside its valid range."""


class EmptyInputError(ValueError):
    """An operation received an empty sample or point list."""


class NumericalError(RuntimeError):
    """A numerical routine failed after its retry policy was exhausted."""


class UnsupportedConfigurationError(ValueError):
    """A requested combination of inputs is outside the supported set."""


class ConfigError(ValueError):
    """Experiment configuration violation, tagged with the offending key."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class WeightsFormatError(ValueError):
    """Controller weights file failed structural validation."""
