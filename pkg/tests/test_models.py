"""Tests for data models.

This module tests the Pydantic models shared by the solver stages and the
tool layer: validation, defaults and derived properties.
"""

import pytest
from pydantic import ValidationError

from lps_forward.models import (
    BoundsReport,
    CriterionResult,
    ErrorType,
    NewtonSettings,
    SolverSettings,
    ToolResult,
)


class TestErrorType:
    """Test ErrorType enum."""

    def test_all_error_types_exist(self):
        """Verify all 8 error types exist."""
        assert len(ErrorType) == 8

    def test_input_error_types(self):
        """Test the 3 input error types."""
        assert ErrorType.CONFIG_ERROR == "config_error"
        assert ErrorType.INVALID_INPUT == "invalid_input"
        assert ErrorType.IO_ERROR == "io_error"

    def test_solver_error_types(self):
        """Test the 4 solver error types."""
        assert ErrorType.NON_CONVERGENCE == "non_convergence"
        assert ErrorType.SINGULAR_SYSTEM == "singular_system"
        assert ErrorType.OVERFLOW == "overflow"
        assert ErrorType.STAGE_FAILURE == "stage_failure"

    def test_validation_error_type(self):
        """Test the bound violation type."""
        assert ErrorType.BOUND_VIOLATION == "bound_violation"


class TestSettings:
    """Test solver settings."""

    def test_defaults(self):
        """Defaults are usable as-is."""
        settings = SolverSettings()
        assert settings.newton.max_iter == 50
        assert settings.bound_slack == 1e-8
        assert settings.coupling_max_iter == 30

    def test_frozen(self):
        """Settings cannot be mutated after construction."""
        settings = NewtonSettings()
        with pytest.raises(ValidationError):
            settings.max_iter = 3

    @pytest.mark.parametrize(
        "kwargs",
        [{"abs_tol": 0.0}, {"max_iter": 0}, {"min_damping": 2.0}, {"max_update": -1.0}],
    )
    def test_invalid_newton_settings(self, kwargs):
        """Out-of-range values are rejected."""
        with pytest.raises(ValidationError):
            NewtonSettings(**kwargs)


class TestBoundsReport:
    """Test BoundsReport model."""

    def _report(self, lo, hi, slack=1e-8):
        return BoundsReport(
            name="w", lower=0.0, upper=1.0, observed_min=lo, observed_max=hi, slack=slack
        )

    def test_inside(self):
        """A range inside the bounds passes."""
        assert self._report(0.1, 0.9).passed

    def test_slack(self):
        """Violations within the slack still pass."""
        assert self._report(-5e-9, 1.0 + 5e-9).passed
        assert not self._report(-2e-8, 0.5).passed
        assert not self._report(0.5, 1.0 + 2e-8).passed

    def test_describe(self):
        """describe() renders status and the four numbers."""
        text = self._report(-1.0, 0.5).describe()
        assert text.startswith("bound name=w status=FAIL")
        assert "min=-1.000000e+00" in text

    def test_passed_serialized(self):
        """The computed flag appears in dumps."""
        assert self._report(0.2, 0.4).model_dump()["passed"] is True


class TestResults:
    """Test CriterionResult and ToolResult."""

    def test_criterion_result(self):
        """Details default to an empty dict."""
        result = CriterionResult(name="scaling", passed=True, runtime_s=0.5)
        assert result.details == {}

    def test_negative_runtime(self):
        """Runtime cannot be negative."""
        with pytest.raises(ValidationError):
            CriterionResult(name="x", passed=True, runtime_s=-1.0)

    def test_tool_result_failure(self):
        """A failure result carries the error type as a string in JSON mode."""
        result = ToolResult(
            success=False, message="m", error="boom", error_type=ErrorType.OVERFLOW
        )
        assert result.model_dump(mode="json")["error_type"] == "overflow"
        assert result.passed is None
