"""Tests for the acceptance suite."""

import json
import math

import numpy as np
import pytest

from lps_forward.cascade import run_cascade
from lps_forward.config import load_config
from lps_forward.errors import NewtonError
from lps_forward.models import CriterionResult
from lps_forward.validation import (
    ValidationReport,
    _timed,
    check_bounds_property,
    check_bounds_suite,
    check_dark_signal,
    check_discretization_order,
    check_preset_bounds,
    check_scaling,
    check_series_oracle,
    manufactured_errors,
    observed_orders,
    profile_metrics,
    property_params,
    random_case,
    run_validate,
    series_params,
    sweep_params,
)


class TestRegimes:
    """Test the artificial parameter regimes."""

    def test_property_params(self):
        """Moderate constants with the requested beam."""
        s = property_params(kappa=2.0, sigma=0.03)
        assert (s.lam, s.delta, s.c_d) == (0.05, 1e-3, 2.0)
        assert s.kappa == 2.0
        assert s.sigma == 0.03

    def test_sweep_and_series_params(self):
        """Sweep drops direct recombination; series switches on Auger terms."""
        assert sweep_params().c_d == 0.0
        s = series_params()
        assert (s.c_n, s.c_p, s.tau_n) == (0.3, 0.2, 0.7)

    def test_random_case_ranges(self):
        """Random doping stays inside [0.5, 1] and the beam inside the domain."""
        rng = np.random.default_rng(3)
        for _ in range(50):
            doping, x0, kappa, sigma = random_case(rng)
            assert doping.mean * (1.0 - doping.amplitude) >= 0.5 - 1e-12
            assert doping.mean * (1.0 + doping.amplitude) <= 1.0 + 1e-12
            assert 0.1 <= x0 <= 0.9
            assert 0.5 <= kappa <= 2.0
            assert 0.02 <= sigma <= 0.05


class TestCriteria:
    """Test individual criteria."""

    def test_scaling(self):
        """Both presets reproduce the published constants."""
        passed, details = check_scaling()
        assert passed, details
        assert set(details) == {"si", "gaas"}

    def test_series_oracle(self):
        """A few random coefficient sets pass the oracle."""
        passed, details = check_series_oracle(3, seed=0)
        assert passed, details
        assert details["partition_counts"] == (1, 2, 3, 5, 7, 11)

    def test_dark_signal(self, small_run):
        """No generation, no signal."""
        passed, details = check_dark_signal(load_config(None, small_run), cells=60)
        assert passed, details

    def test_bounds_property(self):
        """Two random cases, one per dimension."""
        passed, details = check_bounds_property(2, seed=1)
        assert passed, details["failures"]

    def test_preset_bounds(self):
        """Both unmodified presets solve and respect every checked bound."""
        passed, details = check_preset_bounds(cells=60, positions=(0.5,))
        assert passed, details
        assert set(details) == {"si", "gaas"}
        for entry in details.values():
            assert entry["failed_points"] == []
            assert math.isfinite(entry["uD2"][0])

    def test_bounds_suite_includes_presets(self, small_run):
        """The bounds criterion reports the preset runs next to the random cases."""
        config = load_config(None, {**small_run, "run.validate_cases": 2, "laser.sigma_um": 30})
        passed, details = check_bounds_suite(config)
        assert passed, details
        assert set(details["presets"]) == {"si", "gaas"}

    def test_profile_metrics(self, grid_1d, params, sinusoidal):
        """The electron perturbation stays inside the order-two spread."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.4), params)
        metrics = profile_metrics(solution, sinusoidal, 0.4, 1e-8)
        assert metrics["correlation"] > 0.9
        assert metrics["peak_offset"] == pytest.approx(abs(metrics["p0_peak"] - 0.4))
        assert 0.0 < metrics["n_perturbation"] <= metrics["n_perturbation_limit"]
        expected = params.delta**2 * (solution.t3.density_spread + 2e-8)
        assert metrics["n_perturbation_limit"] == pytest.approx(expected)


    def test_manufactured_errors_decrease(self):
        """Errors shrink under refinement in 1D and 2D."""
        for dim, sizes in ((1, (16, 32)), (2, (8, 16))):
            errors = manufactured_errors(dim, sizes)
            assert errors[1] < errors[0]

    def test_discretization_order(self):
        """Second-order convergence in both dimensions."""
        passed, details = check_discretization_order()
        assert passed, details

    def test_observed_orders(self):
        """Ratios of four give order two."""
        assert observed_orders([4.0, 1.0, 0.25]) == [2.0, 2.0]
        assert observed_orders([1.0]) == []


class TestReport:
    """Test report assembly."""

    def test_timed_records_solver_errors(self):
        """A solver error fails the criterion instead of propagating."""

        def failing():
            raise NewtonError("no convergence", [1.0], 3)

        result = _timed("broken", failing)
        assert not result.passed
        assert result.details["error_type"] == "non_convergence"

    def test_report_passed(self):
        """The report passes only when every criterion does."""
        report = ValidationReport(
            criteria=[
                CriterionResult(name="a", passed=True, runtime_s=0.1),
                CriterionResult(name="b", passed=False, runtime_s=0.2),
            ]
        )
        assert not report.passed
        assert report.failed == ["b"]
        assert json.loads(report.to_json())["passed"] is False

    def test_run_validate_subset(self, tmp_path, small_run):
        """Only the requested criteria run and validation.json is written."""
        config = load_config(None, small_run)
        report = run_validate(config, out=tmp_path, only=["series_oracle", "scaling"])
        assert [c.name for c in report.criteria] == ["scaling", "series_oracle"]
        payload = json.loads((tmp_path / "validation.json").read_text())
        assert payload["passed"] == report.passed
        assert [c["name"] for c in payload["criteria"]] == ["scaling", "series_oracle"]

    def test_delta_sweep_switch(self, tmp_path, small_run):
        """The sweep criterion is skipped when switched off."""
        overrides = {**small_run, "run.include_delta_sweep": False}
        report = run_validate(
            load_config(None, overrides), out=tmp_path, only=["asymptotic_consistency"]
        )
        assert report.criteria == []
        assert report.passed

    def test_unknown_criterion_ignored(self, tmp_path, small_run):
        """Unknown names select nothing."""
        report = run_validate(load_config(None, small_run), out=tmp_path, only=["nope"])
        assert report.criteria == []


@pytest.mark.parametrize("seed", [0, 1])
def test_series_oracle_seeds(seed):
    """The oracle passes for different seeds."""
    passed, _ = check_series_oracle(2, seed=seed, order=2)
    assert passed
