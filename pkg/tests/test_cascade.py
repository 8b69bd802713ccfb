"""Tests for the second-order asymptotic cascade."""

import logging

import numpy as np
import pytest

from lps_forward.cascade import (
    ORDER_IDENTITIES,
    Order0Bounds,
    doping_data,
    electroneutral_potential,
    generation_levels,
    hole_density_guess,
    order0_bounds,
    order2_bounds,
    prepare_context,
    recombination0,
    run_cascade,
    solve_phin2,
    solve_phip0,
    solve_point,
    solve_psi0,
    ud2_bound,
)
from lps_forward.config import load_config
from lps_forward.errors import InvalidInputError, NewtonError, StageError
from lps_forward.mesh import Field, build_grid
from lps_forward.models import ErrorType, NewtonSettings, SolverSettings
from lps_forward.physics import generation, r0
from lps_forward.solver import contact_values, h1_norm, newton_solve
from lps_forward.validation import property_params


class TestContactData:
    """Test the electroneutral contact potential and doping input."""

    def test_electroneutral_density(self):
        """n solves n (n - C) = delta^2."""
        c, delta = np.array([0.5, 1.0, 2.0]), 0.1
        n = np.exp(electroneutral_potential(c, delta, 0.0))
        np.testing.assert_allclose(n * (n - c), delta**2)

    def test_phi0_offset(self):
        """The contact potential shifts with phi0."""
        c = np.array([1.0])
        assert electroneutral_potential(c, 0.0, 0.3)[0] == pytest.approx(0.3)

    def test_doping_field_other_grid(self, grid_1d):
        """Doping fields must live on the solve grid."""
        with pytest.raises(InvalidInputError):
            doping_data(grid_1d, Field.constant(build_grid(1, 100), 1.0))

    def test_doping_field_positive(self, grid_1d):
        """Nonpositive doping fields are rejected."""
        with pytest.raises(InvalidInputError):
            doping_data(grid_1d, Field.constant(grid_1d, -1.0))


class TestPsi0:
    """Test the order-zero Poisson solve."""

    def test_constant_doping(self, grid_1d, params, constant):
        """Constant doping gives psi0 = phi0 + ln C up to the contact correction."""
        psi0, result = solve_psi0(grid_1d, constant, params)
        assert np.max(np.abs(psi0.values)) < 2e-6
        assert result.residual_norm <= 1e-10

    def test_doping_imprint(self, grid_1d, params, sinusoidal):
        """psi0 follows ln C and stays within the maximum-principle range."""
        psi0, _ = solve_psi0(grid_1d, sinusoidal, params)
        log_c = np.log(sinusoidal.at(grid_1d.centers))
        assert np.corrcoef(log_c, psi0.values)[0, 1] > 0.9
        assert psi0.min() >= np.log(0.6) - 1e-8
        assert psi0.max() <= np.log(1.0) + 1e-8

    def test_newton_failure_names_stage(self, grid_1d, params, sinusoidal):
        """A failing psi0 solve surfaces as a StageError for psi0."""
        settings = SolverSettings(newton=NewtonSettings(max_iter=1, abs_tol=1e-14))
        with pytest.raises(StageError) as e:
            prepare_context(grid_1d, sinusoidal, params, settings)
        assert e.value.stage == "psi0"
        assert e.value.error_type == ErrorType.NON_CONVERGENCE


class TestBounds:
    """Test the analytic bound constants."""

    def test_order0_uniform(self, grid_1d, params):
        """With uniform doping the recombination range collapses to a point."""
        t1 = order0_bounds(np.zeros(2), Field.constant(grid_1d, 1.0), params, g_max=3.0)
        assert t1.psi_lower == t1.psi_upper == 0.0
        assert t1.r_lower == pytest.approx(3.0)
        assert t1.r_upper == pytest.approx(3.0)
        assert t1.phip_lower == pytest.approx(0.0)
        assert t1.phip_upper == pytest.approx(np.log(2.0))

    def test_order0_dark_contains_phi0(self, grid_1d, params, sinusoidal):
        """phi0 lies inside the phip0 range."""
        t1 = order0_bounds(np.zeros(2), Field(grid_1d, sinusoidal.at(grid_1d.centers)), params)
        assert t1.phip_lower <= params.phi0 <= t1.phip_upper

    def test_order2(self):
        """Order-two constants follow from the order-zero ones, ud_bar and the torsion maximum."""
        t1 = Order0Bounds(
            psi_lower=-0.1,
            psi_upper=0.1,
            r_lower=1.0,
            r_upper=3.0,
            g_max=5.0,
            phip_lower=-1.0,
            phip_upper=2.0,
        )
        t3 = order2_bounds(t1, 0.5, 0.2, 0.8, torsion_max=0.125)
        assert t3.source_lower == pytest.approx(3.0 * (1.0 / 3.0 - 1.0) - 5.0)
        assert t3.source_upper == pytest.approx(3.0 * 7.0)
        assert t3.phin_star_lower == pytest.approx(-7.0 * 0.125)
        assert t3.phin_star_upper == pytest.approx(21.0 * 0.125)
        assert t3.phin2_lower == pytest.approx(-0.875 - 0.5)
        assert t3.phin2_upper == pytest.approx(2.625 + 0.5)
        assert t3.psi2_lower == pytest.approx(-0.5 - 0.875 - 0.5)
        assert t3.psi2_upper == pytest.approx(0.8 + 2.625 + 0.5)
        assert (t3.estimate_lower, t3.estimate_upper) == (-4.0, 3.0)
        assert t3.density_spread == pytest.approx(3.925 + 1.375)

    def test_order2_scales_with_torsion(self):
        """The phin* range grows linearly with the comparison constant."""
        t1 = Order0Bounds(
            psi_lower=0.0,
            psi_upper=0.0,
            r_lower=2.0,
            r_upper=2.0,
            g_max=1e11,
            phip_lower=0.0,
            phip_upper=25.0,
        )
        small = order2_bounds(t1, 0.0, 0.5, 1.0, torsion_max=0.1)
        large = order2_bounds(t1, 0.0, 0.5, 1.0, torsion_max=0.2)
        assert large.phin_star_upper == pytest.approx(2.0 * small.phin_star_upper)
        assert large.phin_star_lower == pytest.approx(2.0 * small.phin_star_lower)
        assert small.phin_star_upper > small.estimate_upper

    def test_order2_rejects_negative_torsion(self):
        """A negative comparison constant is an input error."""
        t1 = order0_bounds(np.zeros(2), Field.constant(build_grid(1, 10), 1.0), property_params())
        with pytest.raises(InvalidInputError):
            order2_bounds(t1, 0.0, 0.0, 1.0, torsion_max=-1.0)


class TestCascade:
    """Test complete cascade runs."""

    def test_dark_exact(self, grid_1d, params, sinusoidal):
        """Without light phip0 = phi0, phin* = 0 and uD2 = 0."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.5, kappa=0.0), params)
        np.testing.assert_array_equal(solution.phip0.values, params.phi0)
        assert np.max(np.abs(solution.phin_star.values)) < 1e-10
        assert abs(solution.ud2) < 1e-10
        assert solution.iterations["phip0"] == 0

    def test_illuminated_bounds(self, grid_1d, params, sinusoidal):
        """Every analytic bound holds and the signal is nonzero."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.4), params)
        assert solution.bounds_ok, [r.describe() for r in solution.bounds]
        assert {r.name for r in solution.bounds} == {
            "psi0",
            "phip0",
            "w",
            "phin_star",
            "uD2",
            "phin2",
            "psi2",
        }
        assert solution.ud2 != 0.0
        assert abs(solution.ud2) <= solution.t3.ud_bar

    def test_hole_excess_under_beam(self, grid_1d, params, sinusoidal):
        """Light raises phip0 above phi0 near the beam."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.4), params)
        peak = grid_1d.x()[int(np.argmax(solution.phip0.values))]
        assert solution.phip0.max() > params.phi0
        assert abs(peak - 0.4) <= 3.0 * params.sigma

    def test_w_monotone(self, grid_1d, params, sinusoidal):
        """In 1D w increases strictly from D1 to D2."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.4), params)
        assert np.all(np.diff(solution.w.values) > 0.0)
        assert 0.0 < solution.w.min() and solution.w.max() < 1.0

    def test_contact_current_consistency(self, grid_1d, params, sinusoidal):
        """R times the contact current of phin2 reproduces uD2."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.4), params)
        assert solution.contact_ud2 == pytest.approx(solution.ud2, rel=1e-6, abs=1e-9)

    def test_superposition(self, grid_1d, params, sinusoidal):
        """phin2 = phin* + uD2 w."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.6), params)
        expected = solve_phin2(solution.phin_star, solution.w, solution.ud2)
        np.testing.assert_allclose(solution.phin2.values, expected.values)

    def test_composed_fields(self, grid_1d, params, sinusoidal):
        """Composed potentials and densities use delta^2 corrections."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.6), params)
        d2 = solution.delta**2
        np.testing.assert_allclose(
            solution.psi.values, solution.psi0.values + d2 * solution.psi2.values
        )
        np.testing.assert_allclose(solution.p.values, d2 * solution.p0.values)
        assert solution.u_d == pytest.approx(d2 * solution.ud2)
        assert solution.phi_p is solution.phip0

    def test_antisymmetric_signal(self, grid_1d, params, constant):
        """With uniform doping mirrored beams give opposite voltages."""
        context = prepare_context(grid_1d, constant, params)
        left = solve_point(context, params.laser(0.3)).ud2
        right = solve_point(context, params.laser(0.7)).ud2
        assert left == pytest.approx(-right, rel=1e-8, abs=1e-12)

    def test_context_reuse(self, grid_1d, params, sinusoidal):
        """solve_point on a shared context equals a fresh run."""
        context = prepare_context(grid_1d, sinusoidal, params)
        reused = solve_point(context, params.laser(0.35))
        fresh = run_cascade(grid_1d, sinusoidal, params.laser(0.35), params)
        assert reused.ud2 == pytest.approx(fresh.ud2, rel=1e-14)

    def test_2d(self, grid_2d, params, sinusoidal):
        """The cascade runs on 2D grids with all bounds holding."""
        solution = run_cascade(grid_2d, sinusoidal, params.laser(0.5), params)
        assert solution.bounds_ok, [r.describe() for r in solution.bounds]
        assert solution.w.min() >= -1e-12 and solution.w.max() <= 1.0 + 1e-12

    def test_order_identities(self, grid_1d, params, constant):
        """The vanishing lower-order terms are reported."""
        solution = run_cascade(grid_1d, constant, params.laser(0.5), params)
        assert solution.order_identities == ORDER_IDENTITIES
        assert all(v == 0.0 for v in solution.order_identities.values())


class TestReporting:
    """Test summaries and dumps."""

    def test_summary(self, grid_1d, params, sinusoidal):
        """The summary carries voltage, bounds and iteration counts."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.4), params)
        summary = solution.summary()
        assert summary["uD2"] == solution.ud2
        assert summary["bounds_ok"] is True
        assert len(summary["bounds"]) == 7
        assert set(summary["iterations"]) == {"psi0", "phip0"}

    def test_dump(self, tmp_path, grid_1d, params, sinusoidal):
        """Every stage field and the bound report are written."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.4), params)
        written = solution.dump(tmp_path / "asym")
        names = {path.name for path in written}
        assert "psi0.dat" in names and "phin2.dat" in names and "bounds.txt" in names
        assert len(written) == 10
        report = (tmp_path / "asym" / "bounds.txt").read_text()
        assert "status=pass" in report
        assert "status=FAIL" not in report


class TestPhip0:
    """Test the order-zero hole solve under strong generation."""

    def test_dark_guess_is_equilibrium(self, grid_1d, params, sinusoidal):
        """Without generation the density solve returns phip0 = phi0."""
        psi0, _ = solve_psi0(grid_1d, sinusoidal, params)
        n0 = np.exp(psi0.values - params.phi0)
        rate = r0(n0, params)
        psi_b = psi0.values[grid_1d.bnd_cell]
        guess = hole_density_guess(
            grid_1d, psi0, np.zeros(grid_1d.n_cells), rate, params, psi_b
        )
        np.testing.assert_allclose(guess, params.phi0, atol=1e-10)

    def test_guess_close_to_solution(self, grid_1d, params, sinusoidal):
        """The density solve already lands near the converged phip0."""
        psi0, _ = solve_psi0(grid_1d, sinusoidal, params)
        laser = params.laser(0.4)
        phip0, _ = solve_phip0(grid_1d, psi0, laser, params)
        rate = r0(np.exp(psi0.values - params.phi0), params)
        g = generation(grid_1d, laser).values
        guess = hole_density_guess(grid_1d, psi0, g, rate, params, psi0.values[grid_1d.bnd_cell])
        assert np.max(np.abs(guess - phip0.values)) < 0.05

    def test_large_generation_converges(self, grid_1d, params, sinusoidal):
        """kappa of order 1e11 converges with a tolerance relative to max G."""
        strong = params.model_copy(update={"kappa": 1e11})
        psi0, _ = solve_psi0(grid_1d, sinusoidal, strong)
        laser = strong.laser(0.5)
        phip0, result = solve_phip0(grid_1d, psi0, laser, strong)
        g_max = generation(grid_1d, laser).max()
        assert result.tolerance == pytest.approx(SolverSettings().newton.abs_tol * g_max)
        assert result.residual_norm <= result.tolerance or result.converged_by == "step"
        assert phip0.max() > strong.phi0 + 10.0

    def test_large_generation_bounds(self, grid_1d, params, sinusoidal):
        """Every checked bound holds at kappa = 1e11."""
        strong = params.model_copy(update={"kappa": 1e11})
        solution = run_cascade(grid_1d, sinusoidal, strong.laser(0.5), strong)
        assert solution.bounds_ok, [r.describe() for r in solution.bounds]
        assert np.isfinite(solution.ud2)

    def test_ramp_after_failure(self, monkeypatch, caplog, grid_1d, params, sinusoidal):
        """A failed direct solve falls back to the generation ramp with the same result."""
        strong = params.model_copy(update={"kappa": 1e6})
        psi0, _ = solve_psi0(grid_1d, sinusoidal, strong)
        laser = strong.laser(0.5)
        direct, _ = solve_phip0(grid_1d, psi0, laser, strong)

        calls = []

        def failing_once(*args, **kwargs):
            calls.append(kwargs.get("scale"))
            if len(calls) == 1:
                raise NewtonError("phip0: forced failure", [1.0], 0)
            return newton_solve(*args, **kwargs)

        monkeypatch.setattr("lps_forward.cascade.newton_solve", failing_once)
        with caplog.at_level(logging.WARNING, logger="lps_forward.cascade"):
            ramped, result = solve_phip0(grid_1d, psi0, laser, strong)
        assert "phip0.ramp" in caplog.text
        assert len(calls) == 1 + len(generation_levels(calls[0]))
        assert calls[-1] == pytest.approx(calls[0])
        np.testing.assert_allclose(ramped.values, direct.values, atol=1e-6)
        assert result.iterations >= 1

    def test_dark_failure_not_ramped(self, monkeypatch, grid_1d, params, sinusoidal):
        """Without strong generation a Newton failure propagates unchanged."""
        psi0, _ = solve_psi0(grid_1d, sinusoidal, params)

        def failing(*args, **kwargs):
            raise NewtonError("phip0: forced failure", [1.0], 0)

        monkeypatch.setattr("lps_forward.cascade.newton_solve", failing)
        with pytest.raises(NewtonError, match="forced failure"):
            solve_phip0(grid_1d, psi0, params.laser(0.5, kappa=1e-3), params)

    def test_generation_levels(self):
        """Levels rise by at most a decade from max G = 1 to the full generation."""
        levels = generation_levels(3e11)
        assert levels[0] == pytest.approx(1.0 / 3e11)
        assert levels[-1] == pytest.approx(1.0)
        ratios = np.array(levels[1:]) / np.array(levels[:-1])
        assert np.all(ratios <= 10.0 + 1e-9)
        assert generation_levels(0.5) == [1.0]


class TestPhinStarBounds:
    """Test the comparison-function bound on phin* and the reported estimate."""

    def test_torsion_positive(self, grid_1d, params, constant):
        """The torsion function is positive inside and near 1/(8 mu_n n0) at the centre."""
        context = prepare_context(grid_1d, constant, params)
        assert context.torsion.min() > 0.0
        n0 = context.n0.values.mean()
        assert context.torsion.max() == pytest.approx(1.0 / (8.0 * params.mu_n * n0), rel=1e-2)

    def test_phin_star_within_comparison_bound(self, grid_1d, params, sinusoidal):
        """phin* stays inside max(R0 - G) and min(R0 - G) times the torsion maximum."""
        context = prepare_context(grid_1d, sinusoidal, params)
        solution = solve_point(context, params.laser(0.4))
        source = recombination0(solution.n0, solution.p0, params) - generation(
            grid_1d, solution.laser
        ).values
        e_max = context.torsion.max()
        assert solution.phin_star.max() <= max(0.0, source.max()) * e_max + 1e-12
        assert solution.phin_star.min() >= min(0.0, source.min()) * e_max - 1e-12
        assert solution.t3.torsion_max == e_max

    def test_estimate_reported_not_checked(self, grid_1d, params, sinusoidal):
        """The r_lower - G_max / r_upper estimate is reported but never fails the solve."""
        solution = run_cascade(grid_1d, sinusoidal, params.laser(0.4), params)
        (estimate,) = solution.estimates
        assert estimate.name == "phin_star"
        assert estimate.checked is False
        assert (estimate.lower, estimate.upper) == (
            solution.t3.estimate_lower,
            solution.t3.estimate_upper,
        )
        assert solution.summary()["estimates"][0]["checked"] is False

    def test_ud_bar_from_cell_values(self, grid_1d, params, sinusoidal):
        """ud_bar uses the largest cell or contact value of mu_n n0 and mu_p p0."""
        context = prepare_context(grid_1d, sinusoidal, params)
        solution = solve_point(context, params.laser(0.4))
        contact = np.exp(context.psi_contact - params.phi0)
        a_n = params.mu_n * max(solution.n0.max(), contact.max())
        a_p = params.mu_p * max(solution.p0.max(), (1.0 / contact).max())
        zero = np.zeros(grid_1d.n_boundary)
        phip_b = contact_values(grid_1d, params.phi0, params.phi0)
        w_b = contact_values(grid_1d, 0.0, 1.0)
        expected = (
            context.resistance
            * (
                a_n * h1_norm(grid_1d, solution.phin_star.values, zero)
                + a_p * h1_norm(grid_1d, solution.phip0.values, phip_b)
            )
            * h1_norm(grid_1d, solution.w.values, w_b)
        )
        assert solution.t3.ud_bar == pytest.approx(expected, rel=1e-12)
        assert ud2_bound(context, solution.p0, solution.phin_star, solution.phip0) == (
            solution.t3.ud_bar
        )
        assert abs(solution.ud2) <= solution.t3.ud_bar


class TestMaterialPresets:
    """Test the cascade on unmodified material presets."""

    @pytest.mark.parametrize("preset", ["si", "gaas"])
    def test_default_preset_point(self, preset):
        """The default grid, power and resistor solve with every bound holding."""
        config = load_config(None, {"material.preset": preset, "laser.sigma_um": 30})
        scaled = config.scaled()
        grid = config.build_grid()
        solution = run_cascade(
            grid,
            config.doping_profile(grid, scaled),
            scaled.laser(0.5),
            scaled,
            settings=config.settings(),
        )
        assert solution.bounds_ok, [r.describe() for r in solution.bounds]
        assert np.isfinite(solution.ud2)
        assert solution.phip0.max() > scaled.phi0
