"""Shared fixtures: small grids and the moderate scaled regime used across tests."""

import pytest

from lps_forward.mesh import build_grid
from lps_forward.physics import ConstantDoping, SinusoidalDoping
from lps_forward.validation import property_params


@pytest.fixture
def params():
    """Moderate scaled parameters (lam=0.05, delta=1e-3, kappa=1, sigma=0.05)."""
    return property_params()


@pytest.fixture
def grid_1d():
    """Uniform 1D grid with 100 cells."""
    return build_grid(1, 100)


@pytest.fixture
def grid_2d():
    """2D grid of 24 x 12 cells on [0, 1] x [0, 0.5] with full side contacts."""
    return build_grid(2, (24, 12), aspect=0.5)


@pytest.fixture
def sinusoidal():
    """Doping inside [0.6, 1.0]."""
    return SinusoidalDoping(mean=0.8, amplitude=0.25, period=0.25)


@pytest.fixture
def constant():
    return ConstantDoping(level=1.0)


@pytest.fixture
def small_run(tmp_path):
    """Overrides for a fast silicon run writing below tmp_path."""
    return {
        "grid.nx": 60,
        "doping.kind": "constant",
        "doping.level": 1.0,
        "laser.sigma_um": 150,
        "laser.power_mW": 1e-6,
        "laser.scan_start": 0.2,
        "laser.scan_stop": 0.8,
        "laser.scan_step": 0.2,
        "run.out": str(tmp_path / "out"),
    }
