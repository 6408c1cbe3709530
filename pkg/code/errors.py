"""
LeverageCycle - Errors
======================
Error kinds and the exception hierarchy shared by every solver stage.

Each exception carries a machine-readable kind, a human message and a
context dict with diagnostics (location, best iterate, residual).
"""

from enum import Enum
from typing import Any, Dict, Optional


class ErrorKind(Enum):
    NONE = "none"
    INVALID_PARAMETER = "invalid_parameter"
    INVALID_ADJUSTMENT = "invalid_adjustment"
    TRANSVERSALITY = "transversality"
    RESOLUTION = "resolution"
    SINGULAR_SYSTEM = "singular_system"
    LINEAR_SOLVE = "linear_solve"
    NON_CONVERGENCE = "non_convergence"
    OUT_OF_DOMAIN = "out_of_domain"
    COLLINEARITY = "collinearity"
    GRID_MISMATCH = "grid_mismatch"
    INVALID_SOLUTION = "invalid_solution"
    CONFIG = "config"
    IO = "io"


class LeverageCycleError(Exception):
    """Base class for all failures raised by LeverageCycle"""

    kind = ErrorKind.NONE

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context: Dict[str, Any] = dict(context or {})

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{k}={_short(v)}" for k, v in self.context.items())
        return f"{self.message} ({details})"


def _short(value: Any) -> str:
    text = repr(value)
    return text if len(text) <= 80 else text[:77] + "..."


class InvalidParameterError(LeverageCycleError):
    kind = ErrorKind.INVALID_PARAMETER


class InvalidAdjustmentError(LeverageCycleError):
    """Adjustment outside the effective domain of the support function"""
    kind = ErrorKind.INVALID_ADJUSTMENT


class TransversalityError(LeverageCycleError):
    """Autarky wealth/consumption ratio has a non-positive denominator"""
    kind = ErrorKind.TRANSVERSALITY


class ResolutionError(LeverageCycleError):
    kind = ErrorKind.RESOLUTION


class SingularSystemError(LeverageCycleError):
    kind = ErrorKind.SINGULAR_SYSTEM


class LinearSolveError(LeverageCycleError):
    kind = ErrorKind.LINEAR_SOLVE


class NonConvergenceError(LeverageCycleError):
    kind = ErrorKind.NON_CONVERGENCE


class OutOfDomainError(LeverageCycleError):
    kind = ErrorKind.OUT_OF_DOMAIN


class CollinearityError(LeverageCycleError):
    kind = ErrorKind.COLLINEARITY


class GridMismatchError(LeverageCycleError):
    kind = ErrorKind.GRID_MISMATCH


class InvalidSolutionError(LeverageCycleError):
    kind = ErrorKind.INVALID_SOLUTION


class ConfigError(LeverageCycleError):
    """Configuration schema violation; `field` is the offending path"""
    kind = ErrorKind.CONFIG

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}", {"field": field})
        self.field = field


class OutputWriteError(LeverageCycleError):
    """Output directory could not be created or an artifact could not be written"""
    kind = ErrorKind.IO
