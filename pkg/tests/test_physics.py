"""Tests for doping profiles, generation and recombination."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from lps_forward.errors import InvalidInputError, OverflowFieldError
from lps_forward.mesh import Field, build_grid, dump_field
from lps_forward.physics import (
    MAX_EXPONENT,
    ConstantDoping,
    LaserSpec,
    SinusoidalDoping,
    TabulatedDoping,
    carrier_densities,
    doping_field,
    doping_on_boundary,
    dr0_dn,
    generation,
    r0,
    r_delta,
    r_delta_partials,
    reference_doping,
    safe_exp,
)
from lps_forward.units import ScaledParams


@pytest.fixture
def rates():
    return ScaledParams(
        lam=0.1,
        delta=1e-3,
        tau=1.0,
        v_th=0.025852,
        c_d=0.5,
        c_n=0.3,
        c_p=0.2,
        tau_n=0.7,
        tau_p=1.3,
        n_t=2.0,
        p_t=0.5,
    )


class TestDoping:
    """Test the doping profiles."""

    def test_constant(self):
        """Constant doping is flat."""
        grid = build_grid(1, 5)
        np.testing.assert_allclose(doping_field(grid, ConstantDoping(level=0.7)).values, 0.7)

    def test_sinusoidal_extrema(self):
        """The quarter period is the maximum."""
        profile = SinusoidalDoping(mean=1.0, amplitude=0.2, period=0.4)
        values = profile.at(np.array([[0.1], [0.3]]))
        np.testing.assert_allclose(values, [1.2, 0.8])
        assert profile.sup == pytest.approx(1.2)

    def test_sinusoidal_along_y(self):
        """axis=1 modulates along y only."""
        profile = SinusoidalDoping(mean=1.0, amplitude=0.5, period=1.0, axis=1)
        values = profile.at(np.array([[0.0, 0.25], [0.9, 0.25]]))
        np.testing.assert_allclose(values, [1.5, 1.5])

    def test_amplitude_below_one(self):
        """Amplitudes of 1 or more would allow zero doping."""
        with pytest.raises(ValidationError):
            SinusoidalDoping(mean=1.0, amplitude=1.0, period=0.5)

    def test_reference_profile(self):
        """1e16 cm^-3 mean with a 100 um period, scaled."""
        profile = reference_doping(1.2e16, 3e-3)
        assert profile.mean == pytest.approx(1.0 / 1.2)
        assert profile.amplitude == 0.2
        assert profile.period == pytest.approx(100e-6 / 3e-3)

    def test_tabulated(self, tmp_path):
        """Tables load from a field dump and take cell values on the boundary."""
        grid = build_grid(1, 4)
        path = tmp_path / "doping.dat"
        dump_field(path, Field(grid, np.array([1.0, 2.0, 3.0, 4.0])))
        profile = TabulatedDoping.from_file(path, grid)
        np.testing.assert_allclose(doping_field(grid, profile).values, [1.0, 2.0, 3.0, 4.0])
        np.testing.assert_allclose(doping_on_boundary(grid, profile), [1.0, 4.0])

    def test_tabulated_size_mismatch(self):
        """The table must match the grid."""
        with pytest.raises(InvalidInputError):
            doping_field(build_grid(1, 4), TabulatedDoping(values=(1.0, 2.0)))

    def test_nonpositive_rejected(self):
        """Only n-doped devices are supported."""
        with pytest.raises(InvalidInputError, match="positive"):
            doping_field(build_grid(1, 2), TabulatedDoping(values=(1.0, 0.0)))

    def test_boundary_values_at_faces(self):
        """Analytic profiles are evaluated at the face centres."""
        profile = SinusoidalDoping(mean=1.0, amplitude=0.5, period=4.0)
        values = doping_on_boundary(build_grid(1, 4), profile)
        np.testing.assert_allclose(values, [1.0, 1.5])


class TestGeneration:
    """Test the laser generation rate."""

    def test_dark(self, grid_1d):
        """kappa = 0 gives zero generation."""
        laser = LaserSpec(kappa=0.0, sigma=0.05, depth=0.1, x0=0.5)
        assert laser.dark
        assert generation(grid_1d, laser).max() == 0.0

    def test_1d_integral(self):
        """The 1D profile integrates to kappa."""
        grid = build_grid(1, 400)
        g = generation(grid, LaserSpec(kappa=2.0, sigma=0.05, depth=0.1, x0=0.5))
        assert float(np.sum(g.values * grid.volumes)) == pytest.approx(2.0, rel=1e-8)

    def test_1d_peak_under_beam(self):
        """The maximum sits at the cell closest to x0."""
        grid = build_grid(1, 100)
        g = generation(grid, LaserSpec(kappa=1.0, sigma=0.02, depth=0.1, x0=0.305))
        assert grid.x()[int(np.argmax(g.values))] == pytest.approx(0.305)

    def test_2d_integral(self):
        """The 2D profile decays from the top side with the penetration depth."""
        grid = build_grid(2, (100, 200), aspect=0.5)
        g = generation(grid, LaserSpec(kappa=1.0, sigma=0.05, depth=0.1, x0=0.5))
        total = float(np.sum(g.values * grid.volumes))
        assert total == pytest.approx(1.0 - math.exp(-5.0), rel=1e-3)

    def test_2d_strongest_at_top(self):
        """Generation is largest in the top row."""
        grid = build_grid(2, (10, 10), aspect=0.5)
        g = generation(grid, LaserSpec(kappa=1.0, sigma=0.1, depth=0.1, x0=0.5))
        top = grid.centers[int(np.argmax(g.values)), 1]
        assert top == pytest.approx(grid.centers[:, 1].max())


class TestRecombination:
    """Test the recombination coefficients."""

    def test_r0(self, rates):
        """r0 = C_d + C_n n + 1 / (tau_p n)."""
        assert r0(2.0, rates) == pytest.approx(0.5 + 0.6 + 1.0 / 2.6)

    def test_dr0_dn(self, rates):
        """The derivative matches a central difference."""
        h = 1e-6
        numeric = (r0(1.5 + h, rates) - r0(1.5 - h, rates)) / (2.0 * h)
        assert dr0_dn(1.5, rates) == pytest.approx(numeric, rel=1e-7)

    def test_r_delta_reduces_to_r0(self, rates):
        """At delta = 0 and p = 0 the full coefficient is r0."""
        n = np.array([0.5, 1.0, 2.0])
        np.testing.assert_allclose(r_delta(n, np.zeros(3), 0.0, rates), r0(n, rates))

    def test_r_delta_value(self, rates):
        """Trap terms enter the SRH denominator."""
        expected = 0.5 + 0.3 + 0.2 * 0.1 + 1.0 / (1.3 * (1.0 + 0.01 * 2.0) + 0.7 * (0.1 + 0.005))
        assert r_delta(1.0, 0.1, 0.01, rates) == pytest.approx(expected)

    def test_partials(self, rates):
        """Partial derivatives match central differences."""
        n, p, d, h = np.array([0.8]), np.array([0.3]), 0.01, 1e-6
        _, r_n, r_p = r_delta_partials(n, p, d, rates)
        numeric_n = (r_delta(n + h, p, d, rates) - r_delta(n - h, p, d, rates)) / (2 * h)
        numeric_p = (r_delta(n, p + h, d, rates) - r_delta(n, p - h, d, rates)) / (2 * h)
        assert r_n[0] == pytest.approx(numeric_n[0], rel=1e-6)
        assert r_p[0] == pytest.approx(numeric_p[0], rel=1e-6)

    def test_nonpositive_density(self, rates):
        """Electron densities must be positive."""
        with pytest.raises(InvalidInputError):
            r0(np.array([1.0, 0.0]), rates)

    def test_negative_hole_density(self, rates):
        """Hole densities must be nonnegative."""
        with pytest.raises(InvalidInputError):
            r_delta(1.0, -0.1, 0.01, rates)


class TestDensities:
    """Test the Boltzmann density maps."""

    def test_safe_exp_guard(self):
        """Arguments above the limit raise instead of overflowing."""
        assert safe_exp(np.array([MAX_EXPONENT]))[0] > 0.0
        with pytest.raises(OverflowFieldError):
            safe_exp(np.array([0.0, MAX_EXPONENT + 1.0]))

    def test_carrier_densities(self, grid_1d):
        """n = exp(psi - phi_n), p = delta^2 exp(phi_p - psi)."""
        psi = Field(grid_1d, grid_1d.x())
        zero = Field.constant(grid_1d, 0.0)
        n, p = carrier_densities(psi, zero, zero, 0.1)
        np.testing.assert_allclose(n.values, np.exp(grid_1d.x()))
        np.testing.assert_allclose(p.values, 0.01 * np.exp(-grid_1d.x()))
        np.testing.assert_allclose(n.values * p.values, 0.01)

    def test_grid_mismatch(self):
        """Potentials must share one grid."""
        a = Field.constant(build_grid(1, 4), 0.0)
        b = Field.constant(build_grid(1, 4), 0.0)
        with pytest.raises(InvalidInputError):
            carrier_densities(a, b, a, 0.1)
