"""Built-in material presets.

Band structure, permittivity, reference mobility and reference doping follow
the published silicon and gallium arsenide tables. Recombination constants and
hole mobilities are not tabulated there; the defaults below are standard
literature values and can be overridden like any other field.
"""

from typing import Any

from pydantic import ValidationError

from .errors import ConfigError
from .units import PhysicalParams

# Shared optical and circuit defaults
_COMMON: dict[str, Any] = {
    "temperature": 300.0,
    "diameter": 3e-3,
    "laser_power": 2e-3,
    "wavelength": 685e-9,
    "penetration_depth": 4.8e-6,
    "reflectivity": 0.3,
    "resistance": 1e3,
    "n_t": 1e10,
    "p_t": 1e10,
}

PRESETS: dict[str, dict[str, Any]] = {
    "si": {
        **_COMMON,
        "band_gap": 1.12,
        "n_c": 1.04e19,
        "n_v": 2.8e19,
        "eps_r": 11.8,
        "mu_n": 1323.0,
        "mu_p": 480.0,
        "mu_ref": 1323.0,
        "c_ref": 1.2e16,
        "c_d": 1.1e-14,
        "c_n": 2.8e-31,
        "c_p": 9.9e-32,
        "tau_n": 1e-6,
        "tau_p": 1e-6,
    },
    "gaas": {
        **_COMMON,
        "band_gap": 1.424,
        "n_c": 4.7e17,
        "n_v": 9e18,
        "eps_r": 12.9,
        "mu_n": 9400.0,
        "mu_p": 400.0,
        "mu_ref": 9400.0,
        "c_ref": 1.2e18,
        "c_d": 7.2e-10,
        "c_n": 1e-30,
        "c_p": 1e-30,
        "tau_n": 1e-8,
        "tau_p": 1e-8,
    },
}


def material_preset(name: str, **overrides: Any) -> PhysicalParams:
    """Build PhysicalParams from a named preset plus overrides.

    The spot radius has no tabulated value and must be passed as an override.

    Args:
        name: ``si`` or ``gaas`` (case-insensitive)
        **overrides: PhysicalParams fields replacing preset values

    Returns:
        Validated PhysicalParams

    Raises:
        ConfigError: Unknown preset or invalid/missing values

    Example:
        >>> p = material_preset("si", spot_radius=20e-6)
        >>> p.c_ref
        1.2e+16
    """
    key = name.lower()
    if key not in PRESETS:
        raise ConfigError(f"Unknown material preset '{name}' (expected one of {sorted(PRESETS)})")
    try:
        return PhysicalParams(**{**PRESETS[key], **overrides})
    except ValidationError as e:
        raise ConfigError(f"Invalid parameters for preset '{name}': {e}") from e
