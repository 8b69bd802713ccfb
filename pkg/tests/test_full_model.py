"""Tests for the full coupled model at finite delta."""

import numpy as np
import pytest

from lps_forward.cascade import run_cascade
from lps_forward.errors import InvalidInputError
from lps_forward.full_model import (
    DeltaSweepReport,
    contact_current,
    delta_sweep,
    solve_full,
)
from lps_forward.mesh import BoundaryTag, build_grid
from lps_forward.physics import SinusoidalDoping
from lps_forward.validation import sweep_params

DELTA = 1e-2


@pytest.fixture
def setup():
    scaled = sweep_params()
    grid = build_grid(1, 80)
    doping = SinusoidalDoping(mean=0.8, amplitude=0.2, period=0.25)
    return grid, doping, scaled


class TestSolveFull:
    """Test the Gummel/secant solve."""

    def test_coupling_satisfied(self, setup):
        """The returned state satisfies u_D = R i_D."""
        grid, doping, scaled = setup
        solution = solve_full(grid, doping, scaled.laser(0.4), scaled, delta=DELTA)
        assert solution.coupling_residual <= 1e-10
        assert solution.u_d == pytest.approx(scaled.resistance * solution.i_d, abs=1e-10)
        assert solution.secant_history

    def test_current_conservation(self, setup):
        """Currents through D1 and D2 cancel."""
        grid, doping, scaled = setup
        solution = solve_full(grid, doping, scaled.laser(0.4), scaled, delta=DELTA)
        assert abs(solution.current_balance) <= 1e-8

    def test_close_to_cascade(self, setup):
        """At small delta the full voltage is close to d^2 uD2."""
        grid, doping, scaled = setup
        laser = scaled.laser(0.4)
        cascade = run_cascade(grid, doping, laser, scaled, delta=DELTA)
        solution = solve_full(grid, doping, laser, scaled, delta=DELTA, initial=cascade)
        assert solution.cascade_ud == cascade.u_d
        assert np.sign(solution.u_d) == np.sign(cascade.u_d)
        assert abs(solution.u_d - cascade.u_d) <= 0.5 * abs(cascade.u_d)

    def test_dark(self, setup):
        """Without light the device stays in equilibrium."""
        grid, doping, scaled = setup
        solution = solve_full(grid, doping, scaled.laser(0.4, kappa=0.0), scaled, delta=DELTA)
        assert abs(solution.u_d) <= 1e-10
        assert abs(solution.i_d) <= 1e-10

    def test_short_circuit(self, setup):
        """R = 0 pins u_D to zero."""
        grid, doping, scaled = setup
        solution = solve_full(
            grid, doping, scaled.laser(0.4), scaled, resistance=0.0, delta=DELTA
        )
        assert solution.u_d == 0.0

    def test_densities(self, setup):
        """n p = delta^2 exp(phi_p - phi_n)."""
        grid, doping, scaled = setup
        solution = solve_full(grid, doping, scaled.laser(0.4), scaled, delta=DELTA)
        expected = DELTA**2 * np.exp(solution.phi_p.values - solution.phi_n.values)
        np.testing.assert_allclose(solution.n.values * solution.p.values, expected)

    def test_contact_current_default_arguments(self, setup):
        """contact_current defaults to the solution's grid and delta."""
        grid, doping, scaled = setup
        solution = solve_full(grid, doping, scaled.laser(0.4), scaled, delta=DELTA)
        assert contact_current(solution) == solution.i_d
        assert contact_current(solution, grid, DELTA) == solution.i_d

    def test_summary(self, setup):
        """The summary reports voltage, current and iteration counts."""
        grid, doping, scaled = setup
        solution = solve_full(grid, doping, scaled.laser(0.4), scaled, delta=DELTA)
        summary = solution.summary()
        assert summary["uD"] == solution.u_d
        assert summary["secant_iterations"] == len(solution.secant_history)
        assert len(summary["gummel_sweeps"]) == len(solution.secant_history)

    def test_contact_voltage(self, setup):
        """Quasi-Fermi contact values on D2 sit u_D above those on D1."""
        grid, doping, scaled = setup
        solution = solve_full(grid, doping, scaled.laser(0.4), scaled, delta=DELTA)
        d1 = solution.phi_boundary[grid.boundary_mask(BoundaryTag.D1)][0]
        d2 = solution.phi_boundary[grid.boundary_mask(BoundaryTag.D2)][0]
        assert d2 - d1 == pytest.approx(solution.u_d)

    def test_nonpositive_delta(self, setup):
        """delta must be positive."""
        grid, doping, scaled = setup
        with pytest.raises(InvalidInputError):
            solve_full(grid, doping, scaled.laser(0.4), scaled, delta=0.0)


class TestDeltaSweep:
    """Test the consistency report."""

    def test_needs_two_deltas(self, setup):
        """A single delta has no slope."""
        grid, doping, scaled = setup
        with pytest.raises(InvalidInputError):
            delta_sweep(grid, doping, scaled.laser(0.4), scaled, [1e-2])

    def test_rows(self, setup):
        """One row per delta with the scaled error."""
        grid, doping, scaled = setup
        report = delta_sweep(grid, doping, scaled.laser(0.4), scaled, [2e-2, 1e-2])
        assert isinstance(report, DeltaSweepReport)
        assert [row.delta for row in report.rows] == [2e-2, 1e-2]
        for row in report.rows:
            assert row.error == pytest.approx(abs(row.ud_full - row.ud_cascade) / row.delta**2)
