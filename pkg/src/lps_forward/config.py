"""Run configuration: flat dotted ``key = value`` files parsed into ``RunConfig``.

Example file::

    # silicon, reference doping, 1D scan
    material.preset = si
    grid.nx = 400
    laser.sigma_um = 30
    laser.scan_start = 0.1
    laser.scan_stop = 0.9
    laser.scan_step = 0.01

Values parse as int, float, ``true``/``false``, comma-separated float lists or
bare strings. Keys outside the reference below are rejected.
"""

import logging
import math
from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError, LpsError
from .mesh import ContactLayout, Grid, build_grid
from .models import ErrorType, NewtonSettings, SolverSettings
from .physics import (
    ConstantDoping,
    DopingProfile,
    SinusoidalDoping,
    TabulatedDoping,
    reference_doping,
)
from .presets import PRESETS, material_preset
from .units import PhysicalParams, ScaledParams, compute_scaling

logger = logging.getLogger(__name__)

ConfigValue = Union[int, float, bool, str, list[float]]

_SECTIONS = ("material", "grid", "doping", "laser", "circuit", "solver", "run", "logging")


class MaterialConfig(BaseModel):
    """``material.*``: a preset plus PhysicalParams overrides."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    preset: Literal["si", "gaas"] = "si"
    overrides: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def _collect_overrides(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        overrides = dict(data.pop("overrides", {}))
        for key in [k for k in data if k != "preset"]:
            overrides[key] = data.pop(key)
        unknown = sorted(set(overrides) - set(PhysicalParams.model_fields))
        if unknown:
            raise ValueError(f"unknown material parameters: {unknown}")
        data["overrides"] = overrides
        return data


class GridConfig(BaseModel):
    """``grid.*``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    dim: Literal[1, 2] = 1
    nx: int = Field(400, ge=2)
    ny: int = Field(40, ge=2)
    aspect: float = Field(0.5, gt=0)
    contact_lo: float = Field(0.0, ge=0, le=1)
    contact_hi: float = Field(1.0, ge=0, le=1)


class DopingConfig(BaseModel):
    """``doping.*``; ``reference`` is the sinusoidal profile around 1e16 cm^-3."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["constant", "sinusoidal", "tabulated", "reference"] = "reference"
    level: float = Field(1.0, gt=0)
    mean: Optional[float] = Field(None, gt=0)
    amplitude: float = Field(0.2, ge=0, lt=1)
    period: Optional[float] = Field(None, gt=0)
    axis: int = Field(0, ge=0, le=1)
    file: Optional[Path] = None

    @model_validator(mode="after")
    def _check_kind(self) -> "DopingConfig":
        if self.kind == "sinusoidal" and (self.mean is None or self.period is None):
            raise ValueError("sinusoidal doping needs doping.mean and doping.period")
        if self.kind == "tabulated" and self.file is None:
            raise ValueError("tabulated doping needs doping.file")
        return self


class LaserConfig(BaseModel):
    """``laser.*``; positions are scaled (domain width 1)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    power_mW: float = Field(2.0, ge=0)
    wavelength_nm: float = Field(685.0, gt=0)
    sigma_um: float = Field(..., gt=0)
    depth_um: float = Field(4.8, gt=0)
    reflectivity: float = Field(0.3, ge=0, lt=1)
    x0: float = Field(0.5, ge=0, le=1)
    scan_start: float = Field(0.1, ge=0, le=1)
    scan_stop: float = Field(0.9, ge=0, le=1)
    scan_step: float = Field(0.05, gt=0)

    @model_validator(mode="after")
    def _check_scan(self) -> "LaserConfig":
        if self.scan_stop < self.scan_start:
            raise ValueError("laser.scan_stop must not lie below laser.scan_start")
        return self

    def positions(self) -> list[float]:
        """Scan positions start, start + step, ... up to stop."""
        count = int(math.floor((self.scan_stop - self.scan_start) / self.scan_step + 1e-9)) + 1
        return [round(self.scan_start + i * self.scan_step, 12) for i in range(count)]


class CircuitConfig(BaseModel):
    """``circuit.*``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    resistance_ohm: float = Field(1e3, ge=0)


class SolverConfig(BaseModel):
    """``solver.*``; ``delta`` overrides the physical small parameter in solve-full."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    abs_tol: float = Field(1e-10, gt=0)
    step_tol: float = Field(1e-13, gt=0)
    max_iter: int = Field(50, ge=1)
    max_update: float = Field(5.0, gt=0)
    min_damping: float = Field(2.0**-20, gt=0, le=1)
    bound_slack: float = Field(1e-8, ge=0)
    gummel_tol: float = Field(1e-12, gt=0)
    gummel_max_iter: int = Field(200, ge=1)
    coupling_tol: float = Field(1e-10, gt=0)
    coupling_max_iter: int = Field(30, ge=1)
    delta: Optional[float] = Field(None, gt=0)

    def settings(self) -> SolverSettings:
        return SolverSettings(
            newton=NewtonSettings(
                abs_tol=self.abs_tol,
                step_tol=self.step_tol,
                max_iter=self.max_iter,
                max_update=self.max_update,
                min_damping=self.min_damping,
            ),
            bound_slack=self.bound_slack,
            gummel_tol=self.gummel_tol,
            gummel_max_iter=self.gummel_max_iter,
            coupling_tol=self.coupling_tol,
            coupling_max_iter=self.coupling_max_iter,
        )


class RunSection(BaseModel):
    """``run.*``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = 0
    threads: int = Field(1, ge=1)
    fail_fast: bool = False
    validate_cases: int = Field(50, ge=1)
    include_delta_sweep: bool = True
    out: Path = Path("out")


class LoggingConfig(BaseModel):
    """``logging.*``."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "WARNING"


class RunConfig(BaseModel):
    """Complete run configuration.

    Attributes:
        material: Preset and parameter overrides
        grid: Grid dimension, resolution and contact layout
        doping: Doping profile
        laser: Beam and scan range
        circuit: External resistor
        solver: Tolerances and iteration limits
        run: Seed, threads and validation options
        logging: Log level
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    material: MaterialConfig = Field(default_factory=MaterialConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    doping: DopingConfig = Field(default_factory=DopingConfig)
    laser: LaserConfig
    circuit: CircuitConfig = Field(default_factory=CircuitConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    run: RunSection = Field(default_factory=RunSection)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    def physical(self) -> PhysicalParams:
        """PhysicalParams of the preset with laser, circuit and material overrides applied."""
        values: dict[str, Any] = {
            "laser_power": self.laser.power_mW * 1e-3,
            "wavelength": self.laser.wavelength_nm * 1e-9,
            "spot_radius": self.laser.sigma_um * 1e-6,
            "penetration_depth": self.laser.depth_um * 1e-6,
            "reflectivity": self.laser.reflectivity,
            "resistance": self.circuit.resistance_ohm,
        }
        values.update(self.material.overrides)
        return material_preset(self.material.preset, **values)

    def scaled(self) -> ScaledParams:
        return compute_scaling(self.physical())

    def build_grid(self) -> Grid:
        g = self.grid
        layout = ContactLayout(axis=0, lo=g.contact_lo, hi=g.contact_hi)
        if g.dim == 1:
            return build_grid(1, g.nx)
        return build_grid(2, (g.nx, g.ny), layout, aspect=g.aspect)

    def doping_profile(self, grid: Grid, scaled: ScaledParams) -> DopingProfile:
        d = self.doping
        if d.kind == "constant":
            return ConstantDoping(level=d.level)
        if d.kind == "sinusoidal":
            assert d.mean is not None and d.period is not None
            return SinusoidalDoping(
                mean=d.mean, amplitude=d.amplitude, period=d.period, axis=d.axis
            )
        if d.kind == "tabulated":
            assert d.file is not None
            return TabulatedDoping.from_file(d.file, grid)
        return reference_doping(scaled.c_ref, scaled.diameter)

    def settings(self) -> SolverSettings:
        return self.solver.settings()


def parse_value(raw: str) -> ConfigValue:
    """Parse one right-hand side.

    Example:
        >>> parse_value("2"), parse_value("1e-6"), parse_value("true"), parse_value("0.1, 0.2")
        (2, 1e-06, True, [0.1, 0.2])
    """
    text = raw.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    if "," in text:
        try:
            return [float(item) for item in text.split(",") if item.strip()]
        except ValueError:
            pass
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict[str, dict[str, ConfigValue]]:
    """Parse the flat key-value format into nested section dictionaries.

    Raises:
        ConfigError: Malformed line, unknown section or duplicate key
    """
    nested: dict[str, dict[str, ConfigValue]] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {content!r}")
        key, raw = (part.strip() for part in content.split("=", 1))
        section, _, name = key.partition(".")
        if not name or "." in name:
            raise ConfigError(f"{source}:{number}: key {key!r} must have the form section.name")
        if section not in _SECTIONS:
            raise ConfigError(f"{source}:{number}: unknown section {section!r}")
        entries = nested.setdefault(section, {})
        if name in entries:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        entries[name] = parse_value(raw)
    return nested


def apply_overrides(
    nested: dict[str, dict[str, ConfigValue]], overrides: dict[str, Any]
) -> dict[str, dict[str, ConfigValue]]:
    """Apply dotted-key overrides (later wins) to parsed sections."""
    merged = {section: dict(entries) for section, entries in nested.items()}
    for key, value in overrides.items():
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise ConfigError(f"override key {key!r} must have the form section.name")
        merged.setdefault(section, {})[name] = (
            parse_value(value) if isinstance(value, str) else value
        )
    return merged


def build_config(nested: dict[str, dict[str, ConfigValue]]) -> RunConfig:
    """Validate parsed sections into a RunConfig.

    Raises:
        ConfigError: Validation failed
    """
    try:
        return RunConfig.model_validate(nested)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_config(
    path: Optional[Path] = None, overrides: Optional[dict[str, Any]] = None
) -> RunConfig:
    """Read, override and validate a configuration file.

    Args:
        path: Config file; defaults only when None
        overrides: Dotted-key values replacing file values

    Returns:
        RunConfig

    Raises:
        LpsError: ``io_error`` if the file cannot be read
        ConfigError: Parse or validation failure
    """
    nested: dict[str, dict[str, ConfigValue]] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise LpsError(f"Cannot read config {path}: {e}", ErrorType.IO_ERROR) from e
        nested = parse_config_text(text, str(path))
    config = build_config(apply_overrides(nested, overrides or {}))
    logger.debug(f"Loaded config preset={config.material.preset} dim={config.grid.dim}")
    return config


def config_reference() -> list[str]:
    """Every accepted dotted key, for documentation and error messages."""
    keys = ["material.preset"] + [f"material.{name}" for name in PhysicalParams.model_fields]
    sections: dict[str, type[BaseModel]] = {
        "grid": GridConfig,
        "doping": DopingConfig,
        "laser": LaserConfig,
        "circuit": CircuitConfig,
        "solver": SolverConfig,
        "run": RunSection,
        "logging": LoggingConfig,
    }
    for section, model in sections.items():
        keys.extend(f"{section}.{name}" for name in model.model_fields)
    return keys


__all__ = [
    "PRESETS",
    "RunConfig",
    "apply_overrides",
    "build_config",
    "config_reference",
    "load_config",
    "parse_config_text",
    "parse_value",
]
