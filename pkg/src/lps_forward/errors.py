"""Exception hierarchy for the LPS forward solver.

Library code raises these exceptions; the tool layer in ``lps_forward.tools``
turns them into result dictionaries carrying an ``error_type`` so the CLI and
the MCP server can report failures uniformly.
"""

from contextlib import contextmanager
from typing import Iterator, Optional

from .models import ErrorType


class LpsError(Exception):
    """Base class for all solver errors.

    Attributes:
        error_type: Machine-readable classification used by the tool layer
    """

    error_type: ErrorType = ErrorType.INVALID_INPUT

    def __init__(self, message: str, error_type: Optional[ErrorType] = None) -> None:
        super().__init__(message)
        if error_type is not None:
            self.error_type = error_type


class ConfigError(LpsError):
    """Configuration file or override could not be parsed or validated."""

    error_type = ErrorType.CONFIG_ERROR


class InvalidInputError(LpsError, ValueError):
    """An argument violates a documented precondition."""

    error_type = ErrorType.INVALID_INPUT


class OverflowFieldError(LpsError):
    """An exponential argument left the representable range."""

    error_type = ErrorType.OVERFLOW


class SingularSystemError(LpsError):
    """A linear system could not be factorized."""

    error_type = ErrorType.SINGULAR_SYSTEM


class NewtonError(LpsError):
    """Newton iteration failed to reach the residual tolerance.

    Attributes:
        residuals: Residual max-norms of every iterate, starting at the initial guess
        iterations: Number of Newton updates taken
    """

    error_type = ErrorType.NON_CONVERGENCE

    def __init__(self, message: str, residuals: list[float], iterations: int) -> None:
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations


class StageError(LpsError):
    """A solver stage failed; wraps the underlying error with its stage name.

    Attributes:
        stage: Name of the failing stage (``psi0``, ``phip0``, ``gummel`` ...)
        point: Scan point index when raised inside a scan, else None
        cause: The original exception
    """

    error_type = ErrorType.STAGE_FAILURE

    def __init__(self, stage: str, cause: Exception, point: Optional[int] = None) -> None:
        where = f"stage '{stage}'" if point is None else f"stage '{stage}' at point {point}"
        super().__init__(f"{where} failed: {cause}")
        self.stage = stage
        self.point = point
        self.cause = cause
        if isinstance(cause, LpsError):
            self.error_type = cause.error_type


@contextmanager
def stage_context(stage: str, point: Optional[int] = None) -> Iterator[None]:
    """Re-raise solver errors inside the block as ``StageError`` for ``stage``.

    Errors that already carry a stage pass through unchanged.
    """
    try:
        yield
    except StageError:
        raise
    except LpsError as e:
        raise StageError(stage, e, point) from e
