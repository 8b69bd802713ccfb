"""Data models for the LPS forward solver.

This module defines the Pydantic models shared across the package: error
classification, solver settings, bound reports and the uniform tool result.
Numerical fields themselves are plain numpy arrays and live in ``mesh``.
"""

from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field


class ErrorType(str, Enum):
    """Standard error types for solver operations.

    Input Errors (3):
        CONFIG_ERROR: Configuration file or key is invalid
        INVALID_INPUT: Argument violates a precondition
        IO_ERROR: Reading or writing a file failed

    Solver Errors (4):
        NON_CONVERGENCE: Newton, Gummel or secant iteration did not converge
        SINGULAR_SYSTEM: Sparse factorization failed
        OVERFLOW: Exponential argument out of range
        STAGE_FAILURE: A named cascade or full-model stage failed

    Validation Errors (1):
        BOUND_VIOLATION: A computed field left its analytic bounds
    """

    # Input errors
    CONFIG_ERROR = "config_error"
    INVALID_INPUT = "invalid_input"
    IO_ERROR = "io_error"

    # Solver errors
    NON_CONVERGENCE = "non_convergence"
    SINGULAR_SYSTEM = "singular_system"
    OVERFLOW = "overflow"
    STAGE_FAILURE = "stage_failure"

    # Validation errors
    BOUND_VIOLATION = "bound_violation"


class NewtonSettings(BaseModel):
    """Settings of the damped Newton driver.

    Attributes:
        abs_tol: Max-norm residual tolerance (scaled, per unit volume)
        step_tol: Relative step size below which an undamped update counts as converged
        max_iter: Maximum number of Newton updates
        max_update: Cap on the max-norm of a single update (scaled potential units)
        min_damping: Smallest damping factor tried by the halving line search
    """

    model_config = ConfigDict(frozen=True)

    abs_tol: float = Field(1e-10, gt=0, description="Residual max-norm tolerance")
    step_tol: float = Field(1e-13, gt=0, description="Relative step tolerance")
    max_iter: int = Field(50, ge=1, description="Maximum Newton iterations")
    max_update: float = Field(5.0, gt=0, description="Largest admissible update max-norm")
    min_damping: float = Field(2.0**-20, gt=0, le=1, description="Minimum line-search factor")


class SolverSettings(BaseModel):
    """Settings shared by the cascade and the full model.

    Attributes:
        newton: Newton driver settings used by every nonlinear stage
        bound_slack: Slack applied to every analytic bound check
        gummel_tol: Max-norm change of all three potentials ending a Gummel sweep loop
        gummel_max_iter: Maximum Gummel sweeps per coupling evaluation
        coupling_tol: Tolerance on |R i_D(u_D) - u_D| for the outer secant
        coupling_max_iter: Maximum secant iterations on u_D
    """

    model_config = ConfigDict(frozen=True)

    newton: NewtonSettings = Field(default_factory=NewtonSettings)
    bound_slack: float = Field(1e-8, ge=0, description="Bound check slack")
    gummel_tol: float = Field(1e-12, gt=0, description="Gummel update tolerance")
    gummel_max_iter: int = Field(200, ge=1, description="Maximum Gummel sweeps")
    coupling_tol: float = Field(1e-10, gt=0, description="Coupling residual tolerance")
    coupling_max_iter: int = Field(30, ge=1, description="Maximum secant iterations")


class BoundsReport(BaseModel):
    """Comparison of a field against analytic lower/upper bounds.

    Attributes:
        name: Field name (``psi0``, ``phip0``, ``w`` ...)
        lower: Analytic lower bound
        upper: Analytic upper bound
        observed_min: Smallest field value
        observed_max: Largest field value
        slack: Tolerance added on both sides
        checked: False for reported estimates that are not enforced
    """

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., description="Field name")
    lower: float = Field(..., description="Analytic lower bound")
    upper: float = Field(..., description="Analytic upper bound")
    observed_min: float = Field(..., description="Observed minimum")
    observed_max: float = Field(..., description="Observed maximum")
    slack: float = Field(..., ge=0, description="Slack on both bounds")
    checked: bool = Field(True, description="Whether a violation fails the solve")

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        """True when the observed range lies inside [lower - slack, upper + slack]."""
        return bool(
            self.observed_min >= self.lower - self.slack
            and self.observed_max <= self.upper + self.slack
        )

    def describe(self) -> str:
        """Render the report as one structured text line."""
        if self.checked:
            status = "pass" if self.passed else "FAIL"
        else:
            status = "held" if self.passed else "exceeded"
        return (
            f"bound name={self.name} status={status} lower={self.lower:.6e} "
            f"min={self.observed_min:.6e} max={self.observed_max:.6e} upper={self.upper:.6e}"
        )


class CriterionResult(BaseModel):
    """Outcome of one validation criterion.

    Attributes:
        name: Criterion identifier
        passed: Whether every check of the criterion held
        runtime_s: Wall-clock time of the criterion
        details: Criterion-specific measurements
    """

    name: str = Field(..., description="Criterion identifier")
    passed: bool = Field(..., description="Whether the criterion holds")
    runtime_s: float = Field(..., ge=0, description="Runtime in seconds")
    details: dict[str, Any] = Field(default_factory=dict, description="Measurements")


class ToolResult(BaseModel):
    """Standard result format for all tools.

    Provides a consistent return format for the CLI and the MCP server.

    Attributes:
        success: Whether the operation succeeded
        message: Human-readable message describing the result
        error: Optional error message (present when success=False)
        error_type: Optional error type for programmatic handling
        passed: For checking tools, whether every check held (None otherwise)
    """

    success: bool = Field(..., description="Whether the operation succeeded")
    message: str = Field(..., description="Human-readable message")
    passed: Optional[bool] = Field(None, description="Whether every check held")
    error: Optional[str] = Field(None, description="Error message if failed")
    error_type: Optional[ErrorType] = Field(None, description="Error type for handling")
