"""
Error categories raised by the MIRG services.

Every error carries a category (shown to CLI users and in HTTP error details)
and the process exit code the CLI uses for it.
"""


class MirgError(Exception):
    """Base class for all toolkit errors."""

    category = "error"
    exit_code = 1


class ParameterError(MirgError, ValueError):
    """A parameter lies outside its valid domain."""

    category = "parameter"
    exit_code = 2


class ShapeError(MirgError, ValueError):
    """Array shapes or lengths do not match."""

    category = "shape"
    exit_code = 2


class RangeError(MirgError, ValueError):
    """An order-statistic index or count is out of range."""

    category = "range"
    exit_code = 2


class ConfigError(MirgError, ValueError):
    """Invalid or unreadable experiment configuration."""

    category = "config"
    exit_code = 2


class DegenerateWeightsError(MirgError):
    """A layer has zero total weight mass T_l."""

    category = "degenerate-weights"
    exit_code = 3


class DegenerateTailError(MirgError):
    """The (k+1)-th largest value is zero, so the Hill log-ratios are undefined."""

    category = "degenerate-tail"
    exit_code = 3


class OnConeError(MirgError):
    """GPOLAR is undefined for points on the cone."""

    category = "on-cone"
    exit_code = 4


class UnsupportedNormError(MirgError):
    category = "unsupported-norm"
    exit_code = 4


class OutputError(MirgError, OSError):
    """Reading or writing an artifact failed; the message names the path."""

    category = "io"
    exit_code = 5
