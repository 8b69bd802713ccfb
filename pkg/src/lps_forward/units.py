"""Nondimensionalization of the semiconductor, laser and circuit parameters.

Dimensional inputs use the units customary in device physics (densities in
cm^-3, mobilities in cm^2/(V s), energies in eV, lengths in m). Everything is
converted to SI inside ``compute_scaling``; the solver works exclusively with
the resulting ``ScaledParams``.

Reference scales:
    V_th  = k_B T / q                      thermal voltage
    tau   = x_bar^2 / (mu_bar V_th)        time scale
    G_bar = n_i^2 / (C_bar tau)            generation/recombination scale
    i_D   = q mu_bar C_bar V_th x_bar      contact current scale
"""

import math
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InvalidInputError
from .physics import LaserSpec

# CODATA 2018 exact / recommended values (SI)
ELEMENTARY_CHARGE = 1.602176634e-19
BOLTZMANN = 1.380649e-23
PLANCK = 6.62607015e-34
SPEED_OF_LIGHT = 299792458.0
VACUUM_PERMITTIVITY = 8.8541878128e-12

# cm-based unit -> SI factors
_PER_CM3 = 1e6  # cm^-3 -> m^-3
_CM2 = 1e-4  # cm^2 -> m^2
_CM3 = 1e-6  # cm^3/s -> m^3/s
_CM6 = 1e-12  # cm^6/s -> m^6/s

# Fields stored in cm-based units and their SI conversion factor
_CGS_FIELDS: dict[str, float] = {
    "n_c": _PER_CM3,
    "n_v": _PER_CM3,
    "c_ref": _PER_CM3,
    "n_t": _PER_CM3,
    "p_t": _PER_CM3,
    "mu_n": _CM2,
    "mu_p": _CM2,
    "mu_ref": _CM2,
    "c_d": _CM3,
    "c_n": _CM6,
    "c_p": _CM6,
}


class PhysicalParams(BaseModel):
    """Dimensional material, laser, circuit and geometry constants.

    ``conduction_band_edge`` defaults to k_B T ln(N_c / C_bar) (in eV), the
    reference choice for which the scaled equilibrium potential phi_0 is zero.
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False, extra="forbid")

    temperature: float = Field(300.0, gt=0, description="Temperature T [K]")
    q: float = Field(ELEMENTARY_CHARGE, gt=0, description="Elementary charge [C]")
    k_b: float = Field(BOLTZMANN, gt=0, description="Boltzmann constant [J/K]")
    h: float = Field(PLANCK, gt=0, description="Planck constant [J s]")
    c: float = Field(SPEED_OF_LIGHT, gt=0, description="Speed of light [m/s]")
    eps_r: float = Field(..., gt=0, description="Relative permittivity [-]")
    band_gap: float = Field(..., ge=0, description="Band gap E_c - E_v [eV]")
    conduction_band_edge: Optional[float] = Field(None, description="E_c [eV]")
    n_c: float = Field(..., gt=0, description="Conduction band DOS N_c [cm^-3]")
    n_v: float = Field(..., gt=0, description="Valence band DOS N_v [cm^-3]")
    mu_n: float = Field(..., gt=0, description="Electron mobility [cm^2/(V s)]")
    mu_p: float = Field(..., gt=0, description="Hole mobility [cm^2/(V s)]")
    mu_ref: float = Field(..., gt=0, description="Reference mobility mu_bar [cm^2/(V s)]")
    c_ref: float = Field(..., gt=0, description="Reference doping C_bar = sup C [cm^-3]")
    diameter: float = Field(3e-3, gt=0, description="Domain diameter x_bar [m]")
    laser_power: float = Field(..., ge=0, description="Laser power P [W]")
    wavelength: float = Field(..., gt=0, description="Laser wavelength lambda_L [m]")
    penetration_depth: float = Field(..., gt=0, description="Penetration depth d_A [m]")
    spot_radius: float = Field(..., gt=0, description="Laser spot radius sigma_L [m]")
    reflectivity: float = Field(0.3, ge=0, lt=1, description="Reflectivity rho [-]")
    c_d: float = Field(..., ge=0, description="Direct recombination C_d [cm^3/s]")
    c_n: float = Field(..., ge=0, description="Electron Auger C_n [cm^6/s]")
    c_p: float = Field(..., ge=0, description="Hole Auger C_p [cm^6/s]")
    tau_n: float = Field(..., gt=0, description="SRH electron lifetime [s]")
    tau_p: float = Field(..., gt=0, description="SRH hole lifetime [s]")
    n_t: float = Field(..., ge=0, description="SRH electron trap density [cm^-3]")
    p_t: float = Field(..., ge=0, description="SRH hole trap density [cm^-3]")
    resistance: float = Field(..., ge=0, description="Circuit resistance R [Ohm]")

    @model_validator(mode="after")
    def _check_band_edges(self) -> "PhysicalParams":
        if self.e_c < self.e_v:
            raise ValueError("conduction band edge must not lie below the valence band edge")
        return self

    @property
    def thermal_voltage(self) -> float:
        """V_th = k_B T / q in volts."""
        return self.k_b * self.temperature / self.q

    @property
    def permittivity(self) -> float:
        """Absolute permittivity eps_bar = eps_r eps_0 in F/m."""
        return self.eps_r * VACUUM_PERMITTIVITY

    @property
    def e_c(self) -> float:
        """Conduction band edge in eV."""
        if self.conduction_band_edge is not None:
            return self.conduction_band_edge
        return self.thermal_voltage * math.log(self.n_c / self.c_ref)

    @property
    def e_v(self) -> float:
        """Valence band edge in eV."""
        return self.e_c - self.band_gap

    def si(self, name: str) -> float:
        """Return field ``name`` converted to SI units."""
        return float(getattr(self, name)) * _CGS_FIELDS.get(name, 1.0)

    @classmethod
    def from_si(cls, **values: Any) -> "PhysicalParams":
        """Construct from SI quantities (m^-3, m^2/(V s), m^3/s, m^6/s).

        Fields without a cm-based unit (lengths, energies, times) pass through.
        """
        converted = {
            key: (value / _CGS_FIELDS[key] if key in _CGS_FIELDS else value)
            for key, value in values.items()
        }
        return cls(**converted)


class ScaledParams(BaseModel):
    """Nondimensional constants of the scaled model.

    Besides the quantities of the scaling itself this carries the reference
    scales needed to translate results back (``v_th``, ``current_scale``,
    ``diameter``, ``c_ref``) and the scaled laser geometry.
    """

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    lam: float = Field(..., gt=0, description="Debye-type parameter lambda")
    delta: float = Field(..., gt=0, description="Small parameter n_i / C_bar")
    tau: float = Field(..., gt=0, description="Time scale [s]")
    v_th: float = Field(..., gt=0, description="Thermal voltage [V]")
    phi0: float = Field(0.0, description="Scaled equilibrium quasi-Fermi potential")
    c_d: float = Field(0.0, ge=0, description="Scaled direct recombination")
    c_n: float = Field(0.0, ge=0, description="Scaled electron Auger coefficient")
    c_p: float = Field(0.0, ge=0, description="Scaled hole Auger coefficient")
    tau_n: float = Field(1.0, gt=0, description="Scaled electron lifetime")
    tau_p: float = Field(1.0, gt=0, description="Scaled hole lifetime")
    n_t: float = Field(0.0, ge=0, description="Scaled electron trap density")
    p_t: float = Field(0.0, ge=0, description="Scaled hole trap density")
    mu_n: float = Field(1.0, gt=0, description="Scaled electron mobility")
    mu_p: float = Field(1.0, gt=0, description="Scaled hole mobility")
    eps: float = Field(1.0, gt=0, description="Scaled permittivity")
    resistance: float = Field(0.0, ge=0, description="Scaled resistance R_hat")
    current_scale: float = Field(1.0, gt=0, description="Current scale i_D_bar [A]")
    kappa: float = Field(0.0, ge=0, description="Scaled generation amplitude kappa_hat")
    sigma: float = Field(0.01, gt=0, description="Scaled spot radius")
    depth: float = Field(0.01, gt=0, description="Scaled penetration depth")
    diameter: float = Field(3e-3, gt=0, description="Domain diameter x_bar [m]")
    c_ref: float = Field(1.0, gt=0, description="Reference doping C_bar [cm^-3]")
    n_i: float = Field(1.0, gt=0, description="Intrinsic density [cm^-3]")
    g_ref: float = Field(1.0, gt=0, description="Generation scale G_bar [m^-3 s^-1]")
    r_ref: float = Field(1.0, gt=0, description="Rate scale R_bar = C_bar/tau [m^-3 s^-1]")

    def laser(self, x0: float, kappa: Optional[float] = None) -> LaserSpec:
        """Build the beam parameters for position ``x0``.

        Args:
            x0: Scaled beam position along x
            kappa: Amplitude override; defaults to the configured kappa_hat

        Returns:
            LaserSpec with this parameter set's scaled geometry
        """
        return LaserSpec(
            kappa=self.kappa if kappa is None else kappa,
            sigma=self.sigma,
            depth=self.depth,
            x0=x0,
        )


def intrinsic_density(p: PhysicalParams) -> float:
    """Intrinsic carrier density n_i in cm^-3.

    n_i = sqrt(N_c N_v) exp(-(E_c - E_v) / (2 k_B T)).

    Args:
        p: Dimensional parameters

    Returns:
        n_i in cm^-3
    """
    return math.sqrt(p.n_c * p.n_v) * math.exp(-p.band_gap / (2.0 * p.thermal_voltage))


def photon_flux(p: PhysicalParams) -> float:
    """Absorbed photon flux kappa = P lambda_L (1 - rho) / (h c) in 1/s."""
    return p.laser_power * p.wavelength * (1.0 - p.reflectivity) / (p.h * p.c)


def compute_scaling(p: PhysicalParams) -> ScaledParams:
    """Compute the nondimensional parameters of the scaled model.

    Args:
        p: Dimensional parameters

    Returns:
        ScaledParams with lambda, delta, tau and all hatted constants

    Raises:
        InvalidInputError: If a reference scale is non-finite or non-positive

    Example:
        >>> from lps_forward.presets import material_preset
        >>> s = compute_scaling(material_preset("si", spot_radius=30e-6))
        >>> 1e-5 < s.lam < 2e-5
        True
    """
    v_th = p.thermal_voltage
    x_bar = p.diameter
    c_bar = p.si("c_ref")
    mu_bar = p.si("mu_ref")
    n_i_cm = intrinsic_density(p)
    n_i = n_i_cm * _PER_CM3

    lam = math.sqrt(p.permittivity * v_th / (p.q * c_bar * x_bar**2))
    delta = n_i_cm / p.c_ref
    tau = x_bar**2 / (mu_bar * v_th)
    g_ref = n_i**2 / (c_bar * tau)

    for name, value in (("lambda", lam), ("delta", delta), ("tau", tau), ("G_bar", g_ref)):
        if not math.isfinite(value) or value <= 0.0:
            raise InvalidInputError(f"reference scale {name} is not positive and finite: {value}")

    return ScaledParams(
        lam=lam,
        delta=delta,
        tau=tau,
        v_th=v_th,
        phi0=p.e_c / v_th - math.log(p.n_c / p.c_ref),
        c_d=tau * c_bar * p.si("c_d"),
        c_n=tau * c_bar**2 * p.si("c_n"),
        c_p=tau * c_bar**2 * p.si("c_p"),
        tau_n=p.tau_n / tau,
        tau_p=p.tau_p / tau,
        n_t=p.n_t / n_i_cm,
        p_t=p.p_t / n_i_cm,
        mu_n=p.mu_n / p.mu_ref,
        mu_p=p.mu_p / p.mu_ref,
        eps=1.0,
        resistance=p.q * mu_bar * c_bar * x_bar * p.resistance,
        current_scale=p.q * mu_bar * c_bar * v_th * x_bar,
        kappa=photon_flux(p) / (g_ref * x_bar**3),
        sigma=p.spot_radius / x_bar,
        depth=p.penetration_depth / x_bar,
        diameter=x_bar,
        c_ref=p.c_ref,
        n_i=n_i_cm,
        g_ref=g_ref,
        r_ref=c_bar / tau,
    )


def descale_signal(u_scaled: float, i_scaled: float, s: ScaledParams) -> tuple[float, float]:
    """Convert a scaled contact voltage and current to volts and amperes."""
    return s.v_th * u_scaled, s.current_scale * i_scaled


def descale_params(s: ScaledParams) -> dict[str, float]:
    """Recover the dimensional recombination, circuit and laser constants.

    Inverse of the corresponding lines of ``compute_scaling``; units match
    ``PhysicalParams`` (cm-based densities and rate constants).

    Args:
        s: Scaled parameters

    Returns:
        Mapping of ``PhysicalParams`` field names to dimensional values
    """
    c_bar = s.c_ref * _PER_CM3
    mu_bar = s.diameter**2 / (s.tau * s.v_th)
    q = s.current_scale / (mu_bar * c_bar * s.v_th * s.diameter)
    return {
        "c_d": s.c_d / (s.tau * c_bar) / _CM3,
        "c_n": s.c_n / (s.tau * c_bar**2) / _CM6,
        "c_p": s.c_p / (s.tau * c_bar**2) / _CM6,
        "tau_n": s.tau_n * s.tau,
        "tau_p": s.tau_p * s.tau,
        "n_t": s.n_t * s.n_i,
        "p_t": s.p_t * s.n_i,
        "mu_ref": mu_bar / _CM2,
        "resistance": s.resistance / (q * mu_bar * c_bar * s.diameter),
        "spot_radius": s.sigma * s.diameter,
        "penetration_depth": s.depth * s.diameter,
    }


def scaling_table(s: ScaledParams) -> dict[str, float]:
    """Flat name -> value table of every scaled constant, for reports."""
    return {key: float(value) for key, value in s.model_dump().items()}
