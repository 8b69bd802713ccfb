"""Constitutive terms of the scaled model.

Doping profiles, laser generation, recombination coefficients and the
Boltzmann carrier-density maps. All quantities are scaled: densities relative
to C_bar, rates relative to G_bar, lengths relative to x_bar.
"""

import math
from pathlib import Path
from typing import TYPE_CHECKING, Annotated, Literal, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field as PydanticField

from .errors import InvalidInputError, OverflowFieldError
from .mesh import Field, Grid, load_field

if TYPE_CHECKING:
    from .units import ScaledParams

FloatArray = NDArray[np.float64]

# Largest exponent accepted before a density map is declared overflowed
MAX_EXPONENT = 700.0

# Sinusoidal reference profile: mean donor density [cm^-3], relative amplitude, period [m]
REFERENCE_DOPING_MEAN = 1e16
REFERENCE_DOPING_AMPLITUDE = 0.2
REFERENCE_DOPING_PERIOD = 100e-6


class ConstantDoping(BaseModel):
    """Spatially constant donor density."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["constant"] = "constant"
    level: float = PydanticField(1.0, gt=0, description="Scaled doping level")

    def at(self, points: FloatArray) -> FloatArray:
        return np.full(points.shape[0], self.level)


class SinusoidalDoping(BaseModel):
    """Doping ``mean * (1 + amplitude * sin(2 pi x_axis / period))``."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["sinusoidal"] = "sinusoidal"
    mean: float = PydanticField(..., gt=0, description="Scaled mean level")
    amplitude: float = PydanticField(..., ge=0, lt=1, description="Relative amplitude")
    period: float = PydanticField(..., gt=0, description="Scaled period")
    axis: int = PydanticField(0, ge=0, le=1, description="Modulated axis")

    def at(self, points: FloatArray) -> FloatArray:
        phase = 2.0 * math.pi * points[:, self.axis] / self.period
        return np.asarray(self.mean * (1.0 + self.amplitude * np.sin(phase)))

    @property
    def sup(self) -> float:
        return self.mean * (1.0 + self.amplitude)


class TabulatedDoping(BaseModel):
    """Per-cell doping values, typically loaded from a field dump."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["tabulated"] = "tabulated"
    values: tuple[float, ...] = PydanticField(..., min_length=1, description="Per-cell values")

    @classmethod
    def from_file(cls, path: Path, grid: Grid) -> "TabulatedDoping":
        return cls(values=tuple(float(v) for v in load_field(path, grid).values))


DopingProfile = Annotated[
    Union[ConstantDoping, SinusoidalDoping, TabulatedDoping],
    PydanticField(discriminator="kind"),
]


def doping_field(grid: Grid, profile: DopingProfile) -> Field:
    """Evaluate a doping profile at the cell centres.

    Raises:
        InvalidInputError: Size mismatch or a nonpositive value
    """
    if isinstance(profile, TabulatedDoping):
        values = np.asarray(profile.values, dtype=np.float64)
        if values.size != grid.n_cells:
            raise InvalidInputError(
                f"tabulated doping has {values.size} values, grid has {grid.n_cells} cells"
            )
    else:
        values = profile.at(grid.centers)
    if np.any(values <= 0.0):
        raise InvalidInputError("doping must be positive everywhere (n-doped device)")
    return Field(grid, values)


def doping_on_boundary(grid: Grid, profile: DopingProfile) -> FloatArray:
    """Doping at every boundary face centre (adjacent cell value for tables)."""
    if isinstance(profile, TabulatedDoping):
        return np.asarray(profile.values, dtype=np.float64)[grid.bnd_cell]
    return profile.at(grid.bnd_center)


def reference_doping(c_ref: float, diameter: float) -> SinusoidalDoping:
    """The sinusoidal reference profile N_D0 (1 + 0.2 sin(2 pi x / 100 um)), scaled.

    Args:
        c_ref: Reference doping C_bar in cm^-3
        diameter: Domain diameter x_bar in m
    """
    return SinusoidalDoping(
        mean=REFERENCE_DOPING_MEAN / c_ref,
        amplitude=REFERENCE_DOPING_AMPLITUDE,
        period=REFERENCE_DOPING_PERIOD / diameter,
    )


class LaserSpec(BaseModel):
    """Scaled laser beam.

    Attributes:
        kappa: Scaled generation amplitude; 0 is the dark case
        sigma: Scaled spot radius
        depth: Scaled penetration depth (2D only)
        x0: Beam position along x
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    kappa: float = PydanticField(..., ge=0, description="Scaled amplitude")
    sigma: float = PydanticField(..., gt=0, description="Scaled spot radius")
    depth: float = PydanticField(..., gt=0, description="Scaled penetration depth")
    x0: float = PydanticField(..., description="Beam position")

    @property
    def dark(self) -> bool:
        return self.kappa == 0.0


def generation(g: Grid, laser: LaserSpec) -> Field:
    """Evaluate the generation rate at the cell centres.

    The shape is normalized to unit integral over the line (1D) or over the
    half-plane below the illuminated top side y = aspect (2D).

    Args:
        g: Grid
        laser: Beam parameters

    Returns:
        Nonnegative generation field
    """
    if laser.dark:
        return Field.constant(g, 0.0)
    x = g.centers[:, 0]
    lateral = np.exp(-((x - laser.x0) ** 2) / (2.0 * laser.sigma**2))
    lateral /= math.sqrt(2.0 * math.pi) * laser.sigma
    if g.dim == 1:
        return Field(g, laser.kappa * lateral)
    below = g.lengths[1] - g.centers[:, 1]
    vertical = np.exp(-below / laser.depth) / laser.depth
    return Field(g, laser.kappa * lateral * vertical)


def _positive(values: ArrayLike, name: str) -> FloatArray:
    array = np.asarray(values, dtype=np.float64)
    if np.any(~(array > 0.0)):
        raise InvalidInputError(f"{name} must be positive")
    return array


def r0(n: ArrayLike, s: "ScaledParams") -> FloatArray:
    """Order-zero recombination coefficient C_d + C_n n + 1 / (tau_p n).

    Raises:
        InvalidInputError: If any n is nonpositive
    """
    n = _positive(n, "electron density")
    return np.asarray(s.c_d + s.c_n * n + 1.0 / (s.tau_p * n))


def dr0_dn(n: ArrayLike, s: "ScaledParams") -> FloatArray:
    """Derivative c(n) = C_n - 1 / (tau_p n^2) of ``r0``."""
    n = _positive(n, "electron density")
    return np.asarray(s.c_n - 1.0 / (s.tau_p * n**2))


def _r_delta_denominator(
    n: FloatArray, p: FloatArray, delta: float, s: "ScaledParams"
) -> FloatArray:
    denominator = s.tau_p * (n + delta * s.n_t) + s.tau_n * (p + delta * s.p_t)
    if np.any(~(denominator > 0.0)):
        raise InvalidInputError("recombination denominator vanishes")
    return np.asarray(denominator)


def r_delta(n: ArrayLike, p: ArrayLike, delta: float, s: "ScaledParams") -> FloatArray:
    """Full recombination coefficient at finite delta.

    C_d + C_n n + C_p p + 1 / (tau_p (n + delta n_T) + tau_n (p + delta p_T)).

    Raises:
        InvalidInputError: Negative p or delta, nonpositive n, vanishing denominator
    """
    n = _positive(n, "electron density")
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < 0.0) or delta < 0.0:
        raise InvalidInputError("hole density and delta must be nonnegative")
    denominator = _r_delta_denominator(n, p, delta, s)
    return np.asarray(s.c_d + s.c_n * n + s.c_p * p + 1.0 / denominator)


def r_delta_partials(
    n: FloatArray, p: FloatArray, delta: float, s: "ScaledParams"
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """``r_delta`` together with its partial derivatives in n and p."""
    value = r_delta(n, p, delta, s)
    inv_sq = 1.0 / _r_delta_denominator(n, p, delta, s) ** 2
    return value, s.c_n - s.tau_p * inv_sq, s.c_p - s.tau_n * inv_sq


def safe_exp(argument: FloatArray, what: str = "exponent") -> FloatArray:
    """``exp`` with the overflow guard shared by all density maps.

    Raises:
        OverflowFieldError: If any |argument| exceeds MAX_EXPONENT
    """
    if np.any(np.abs(argument) > MAX_EXPONENT):
        raise OverflowFieldError(f"{what} out of range: max |arg| = {np.abs(argument).max():.3e}")
    return np.exp(argument)


def carrier_densities(psi: Field, phi_n: Field, phi_p: Field, delta: float) -> tuple[Field, Field]:
    """Boltzmann densities n = exp(psi - phi_n), p = delta^2 exp(phi_p - psi).

    Raises:
        InvalidInputError: Fields on different grids
        OverflowFieldError: Exponent magnitude above 700
    """
    if not (psi.grid is phi_n.grid is phi_p.grid):
        raise InvalidInputError("potentials must live on the same grid")
    n = safe_exp(psi.values - phi_n.values, "psi - phi_n")
    p = delta**2 * safe_exp(phi_p.values - psi.values, "phi_p - psi")
    return Field(psi.grid, n), Field(psi.grid, p)
