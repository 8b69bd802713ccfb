"""Tests for the material presets."""

import pytest

from lps_forward.errors import ConfigError
from lps_forward.models import ErrorType
from lps_forward.presets import PRESETS, material_preset


class TestMaterialPreset:
    """Test preset lookup and overrides."""

    def test_both_presets_exist(self):
        """Silicon and gallium arsenide are available."""
        assert set(PRESETS) == {"si", "gaas"}

    def test_case_insensitive(self):
        """Names are matched case-insensitively."""
        assert material_preset("SI", spot_radius=1e-5).c_ref == 1.2e16

    def test_override(self):
        """Overrides replace preset values."""
        p = material_preset("gaas", spot_radius=1e-5, resistance=50.0)
        assert p.resistance == 50.0
        assert p.eps_r == 12.9

    def test_unknown_preset(self):
        """Unknown names raise ConfigError."""
        with pytest.raises(ConfigError) as e:
            material_preset("ge", spot_radius=1e-5)
        assert e.value.error_type == ErrorType.CONFIG_ERROR
        assert "ge" in str(e.value)

    def test_spot_radius_required(self):
        """The spot radius has no tabulated default."""
        with pytest.raises(ConfigError):
            material_preset("si")

    def test_invalid_override(self):
        """Invalid values surface as ConfigError."""
        with pytest.raises(ConfigError):
            material_preset("si", spot_radius=1e-5, reflectivity=1.5)
