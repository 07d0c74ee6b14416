"""Exception types shared across the package.

The CLI maps ConfigError to exit code 2 and numerical failures
(SolverError, TrainingError, EvaluationError) to exit code 3.
"""


class EikonetError(Exception):
    """Base class for all package errors."""


class DimensionError(EikonetError):
    """Operand shapes are incompatible."""


class ContractError(EikonetError):
    """An operation was called outside its contract (e.g. non-scalar loss)."""


class ConfigError(EikonetError):
    """Invalid configuration or architecture description."""


class BoundsError(EikonetError):
    """A coordinate lies outside the grid."""


class ModelError(EikonetError):
    """Invalid velocity model (e.g. non-positive speed)."""


class FormatError(EikonetError):
    """Malformed grid/dataset/checkpoint file."""

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class SolverError(EikonetError):
    """A numerical solver failed to converge."""


class DataError(EikonetError):
    """Invalid data fed to a loss or dataset builder."""


class TrainingError(EikonetError):
    """Training aborted (e.g. NaN loss or NaN gradient)."""


class EvaluationError(EikonetError):
    """Evaluation produced non-finite predictions."""


class MetricError(EikonetError):
    """A metric is undefined for the given inputs (e.g. zero reference)."""
