"""Error hierarchy. Each error knows the CLI exit code it maps to."""

from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class QdsbError(Exception):
    """Base class for all package errors"""

    exit_code: int = EXIT_FAILURE


class ConfigurationError(QdsbError):
    """Invalid flags, config keys or parameter values"""

    exit_code = EXIT_USAGE


class DataError(QdsbError):
    """Problems reading or generating point clouds"""


class MissingFileError(DataError):
    exit_code = EXIT_USAGE


class RaggedRowError(DataError):
    def __init__(self, path: str, line: int, expected: int, found: int):
        super().__init__(
            f"{path}:{line}: row has {found} columns, expected {expected}"
        )
        self.line = line


class NonNumericTokenError(DataError):
    def __init__(self, path: str, line: int, token: str):
        super().__init__(f"{path}:{line}: non-numeric token {token!r}")
        self.line = line
        self.token = token


class NonFiniteValueError(DataError):
    pass


class EmptyDataError(DataError):
    pass


class DimensionError(QdsbError):
    """Dimension or size mismatch between arrays"""


class AnchorError(QdsbError):
    pass


class TransportError(QdsbError):
    pass


class MarginalError(TransportError):
    pass


class BridgeError(QdsbError):
    pass


class ShapeError(QdsbError):
    pass


class CheckpointError(QdsbError):
    pass


class SimulationError(QdsbError):
    """State became non-finite during integration"""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class EvaluationError(QdsbError):
    pass


class OracleSizeError(QdsbError):
    """Exact oracle asked to run outside its size regime"""

    exit_code = EXIT_USAGE


class VerificationError(QdsbError):
    """At least one stability bound failed"""


class PlotError(QdsbError):
    pass


class TrainingError(QdsbError):
    """Loss or parameters became non-finite"""
