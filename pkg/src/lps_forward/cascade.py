"""Asymptotic cascade for the second-order LPS signal.

The reduced model decouples into a chain of elliptic problems:

    psi0   nonlinear Poisson with electroneutral contact data
    phip0  nonlinear hole equation driven by G - R0
    w      -div(mu_n n0 grad w) = 0, w = 0 on D1, w = 1 on D2
    phin*  -div(mu_n n0 grad phin*) = R0 - G, zero contact data
    uD2    closed-form coupling through the resistor
    psi2   -lam^2 div(eps grad psi2) + n0 psi2 = p0 + n0 phin2

``psi0``, ``n0``, ``w`` and the two linear operators do not depend on the laser
and are kept in a ``CascadeContext`` that scans share read-only.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict

from .errors import InvalidInputError, NewtonError, SingularSystemError, stage_context
from .mesh import BoundaryTag, Field, Grid, dump_field
from .models import BoundsReport, SolverSettings
from .physics import (
    DopingProfile,
    LaserSpec,
    doping_field,
    doping_on_boundary,
    generation,
    r0,
    safe_exp,
)
from .solver import (
    EllipticProblem,
    ExponentialCoefficient,
    FactorizedOperator,
    NewtonResult,
    ResidualCallback,
    assemble_load,
    assemble_matrix,
    bilinear_form,
    boundary_flux,
    check_bounds,
    contact_values,
    drift_diffusion_operator,
    exponential_coefficient,
    exponential_diffusion,
    face_coefficients,
    h1_norm,
    newton_solve,
    per_volume,
    sparse_solve,
)
from .units import ScaledParams
from .utils import atomic_write_text, format_kv

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
DopingInput = Union[Field, DopingProfile]

ORDER_IDENTITIES: dict[str, float] = {
    "uD0": 0.0,
    "uD1": 0.0,
    "psi1": 0.0,
    "phin1": 0.0,
    "phip1": 0.0,
    "phin0_minus_phi0": 0.0,
}


def doping_data(grid: Grid, doping: DopingInput) -> tuple[Field, FloatArray]:
    """Cell values and boundary-face values of a doping profile or field."""
    if isinstance(doping, Field):
        if doping.grid is not grid:
            raise InvalidInputError("doping field lives on a different grid")
        if np.any(doping.values <= 0.0):
            raise InvalidInputError("doping must be positive everywhere (n-doped device)")
        return doping, np.asarray(doping.values[grid.bnd_cell])
    return doping_field(grid, doping), doping_on_boundary(grid, doping)


def electroneutral_potential(c: FloatArray, delta: float, phi0: float) -> FloatArray:
    """Contact potential phi0 + ln(n) with n = (C + sqrt(C^2 + 4 delta^2)) / 2."""
    n = 0.5 * (c + np.sqrt(c**2 + 4.0 * delta**2))
    return np.asarray(phi0 + np.log(n))


def _constant_faces(grid: Grid, value: float) -> tuple[FloatArray, FloatArray]:
    return np.full(grid.n_faces, value), np.full(grid.n_boundary, value)


def poisson_operator(grid: Grid, scaled: ScaledParams) -> EllipticProblem:
    """The -lam^2 div(eps grad .) problem with zero data."""
    a_face, a_boundary = _constant_faces(grid, scaled.lam**2 * scaled.eps)
    return EllipticProblem(
        grid=grid, a_face=a_face, a_boundary=a_boundary, f=np.zeros(grid.n_cells)
    )


def solve_psi0(
    grid: Grid,
    doping: DopingInput,
    scaled: ScaledParams,
    settings: Optional[SolverSettings] = None,
    delta: Optional[float] = None,
    initial: Optional[FloatArray] = None,
) -> tuple[Field, NewtonResult]:
    """Solve the order-zero Poisson problem.

    -lam^2 div(eps grad psi0) = C - exp(psi0 - phi0), psi0 = psi_0 on both
    contacts, homogeneous Neumann elsewhere. The default initial guess is the
    electroneutral field phi0 + ln C.

    Args:
        grid: The grid
        doping: Doping profile or per-cell doping field
        scaled: Scaled parameters (lam, eps, phi0)
        settings: Solver settings
        delta: Small parameter used in the contact data; defaults to ``scaled.delta``
        initial: Optional initial guess

    Returns:
        (psi0, Newton diagnostics)

    Raises:
        NewtonError: If Newton does not converge
    """
    settings = settings or SolverSettings()
    delta = scaled.delta if delta is None else delta
    c, c_boundary = doping_data(grid, doping)
    psi_b = electroneutral_potential(c_boundary, delta, scaled.phi0)

    problem = poisson_operator(grid, scaled)
    problem = EllipticProblem(
        grid=grid,
        a_face=problem.a_face,
        a_boundary=problem.a_boundary,
        f=problem.f,
        d1=psi_b,
        d2=psi_b,
    )
    matrix = per_volume(grid, assemble_matrix(problem))
    load = assemble_load(problem) / grid.volumes

    def residual(psi: FloatArray) -> tuple[FloatArray, sp.spmatrix]:
        n = safe_exp(psi - scaled.phi0, "psi0 - phi0")
        return matrix @ psi - load + n - c.values, matrix + sp.diags(n)

    start = scaled.phi0 + np.log(c.values) if initial is None else initial
    result = newton_solve(residual, start, settings.newton, label="psi0")
    return Field(grid, result.solution), result


class Order0Bounds(BaseModel):
    """Maximum-principle constants of the order-zero problems.

    Attributes:
        psi_lower / psi_upper: Range of psi0
        r_lower / r_upper: Range of r0(n0) over that range
        g_max: Largest generation value
        phip_lower / phip_upper: Range of phip0
    """

    model_config = ConfigDict(frozen=True)

    psi_lower: float
    psi_upper: float
    r_lower: float
    r_upper: float
    g_max: float
    phip_lower: float
    phip_upper: float


def order0_bounds(
    psi_contact: FloatArray, doping: Field, scaled: ScaledParams, g_max: float = 0.0
) -> Order0Bounds:
    """Compute the order-zero bound constants.

    Args:
        psi_contact: Contact values of psi0
        doping: Doping field
        scaled: Scaled parameters
        g_max: Supremum of the generation rate

    Returns:
        Order0Bounds
    """
    phi0 = scaled.phi0
    psi_lower = min(float(np.min(psi_contact)), phi0 + float(np.log(doping.min())))
    psi_upper = max(float(np.max(psi_contact)), phi0 + float(np.log(doping.max())))
    r_lower = (
        scaled.c_d
        + scaled.c_n * np.exp(psi_lower - phi0)
        + np.exp(phi0 - psi_upper) / scaled.tau_p
    )
    r_upper = (
        scaled.c_d
        + scaled.c_n * np.exp(psi_upper - phi0)
        + np.exp(phi0 - psi_lower) / scaled.tau_p
    )
    return Order0Bounds(
        psi_lower=psi_lower,
        psi_upper=psi_upper,
        r_lower=float(r_lower),
        r_upper=float(r_upper),
        g_max=float(g_max),
        phip_lower=phi0 + float(np.log(r_lower / r_upper)),
        phip_upper=phi0 + float(np.log((r_upper + g_max) / r_lower)),
    )


class Order2Bounds(BaseModel):
    """Bound constants of the order-two problems.

    ``source_lower`` and ``source_upper`` enclose R0 - G. ``estimate_lower`` and
    ``estimate_upper`` are the constants min(0, r_lower - g_max) and r_upper,
    which are reported but not checked: they leave out the comparison constant
    ``torsion_max`` and fail once G and R0 are large.
    """

    model_config = ConfigDict(frozen=True)

    ud_bar: float
    torsion_max: float
    source_lower: float
    source_upper: float
    phin_star_lower: float
    phin_star_upper: float
    phin2_lower: float
    phin2_upper: float
    psi2_lower: float
    psi2_upper: float
    estimate_lower: float
    estimate_upper: float

    @property
    def density_spread(self) -> float:
        """Bound on |psi2 - phin2|, hence on |n2| / n0."""
        return max(self.psi2_upper - self.phin2_lower, self.phin2_upper - self.psi2_lower)


def order2_bounds(
    t1: Order0Bounds,
    ud_bar: float,
    ratio_min: float,
    ratio_max: float,
    torsion_max: float,
) -> Order2Bounds:
    """Compute the order-two bound constants.

    phin* solves A phin* = R0 - G and the torsion function e solves A e = 1,
    both with zero contact data, for the M-matrix A of the electron operator.
    Then A (s e - phin*) >= 0 for s >= max(R0 - G), so phin* <= max(R0 - G) max e,
    and likewise from below. R0 - G = r0 (exp(phip0 - phi0) - 1) - G is enclosed
    with the order-zero ranges of r0 and phip0.

    Args:
        t1: Order-zero constants
        ud_bar: Estimate of |uD2|
        ratio_min / ratio_max: Range of p0 / n0
        torsion_max: Largest value of the torsion function e (>= 0)
    """
    if not torsion_max >= 0.0:
        raise InvalidInputError(f"torsion_max must be >= 0, got {torsion_max}")
    excess_lower = t1.r_lower / t1.r_upper - 1.0
    excess_upper = (t1.r_upper + t1.g_max) / t1.r_lower - 1.0
    source_lower = min(0.0, t1.r_upper * excess_lower - t1.g_max)
    source_upper = max(0.0, t1.r_upper * excess_upper)
    low = source_lower * torsion_max
    high = source_upper * torsion_max
    return Order2Bounds(
        ud_bar=ud_bar,
        torsion_max=torsion_max,
        source_lower=source_lower,
        source_upper=source_upper,
        phin_star_lower=low,
        phin_star_upper=high,
        phin2_lower=low - ud_bar,
        phin2_upper=high + ud_bar,
        psi2_lower=min(-ud_bar, ratio_min) + low - ud_bar,
        psi2_upper=max(ud_bar, ratio_max) + high + ud_bar,
        estimate_lower=min(0.0, t1.r_lower - t1.g_max),
        estimate_upper=t1.r_upper,
    )


def electron_operator(
    grid: Grid, n0: Field, n0_contact: FloatArray, mu_n: float
) -> EllipticProblem:
    """The -div(mu_n n0 grad .) problem shared by w and phin*."""
    a_face, a_boundary = face_coefficients(grid, n0.values, n0_contact)
    return EllipticProblem(
        grid=grid, a_face=mu_n * a_face, a_boundary=mu_n * a_boundary, f=np.zeros(grid.n_cells)
    )


def solve_w(
    grid: Grid,
    n0: Field,
    mu_n: float = 1.0,
    n0_contact: Optional[FloatArray] = None,
    operator: Optional[FactorizedOperator] = None,
) -> Field:
    """Solve -div(mu_n n0 grad w) = 0 with w = 0 on D1 and w = 1 on D2.

    Args:
        grid: The grid
        n0: Order-zero electron density
        mu_n: Scaled electron mobility
        n0_contact: n0 on the boundary faces; adjacent cell values if omitted
        operator: Prefactorized electron operator to reuse

    Returns:
        w, with 0 <= w <= 1
    """
    if operator is None:
        contact = n0.values[grid.bnd_cell] if n0_contact is None else n0_contact
        operator = FactorizedOperator(electron_operator(grid, n0, contact, mu_n))
    return operator.solve(np.zeros(grid.n_cells), 0.0, 1.0)


def solve_phip0(
    grid: Grid,
    psi0: Field,
    laser: LaserSpec,
    scaled: ScaledParams,
    settings: Optional[SolverSettings] = None,
    psi_contact: Optional[FloatArray] = None,
) -> tuple[Field, NewtonResult]:
    """Solve the order-zero hole problem.

    -div(mu_p exp(phip0 - psi0) grad phip0) = G - r0(n0) (exp(phip0 - phi0) - 1)
    with phip0 = phi0 on the contacts. Newton starts from ``hole_density_guess``
    and measures residuals relative to max(1, max G). If it fails, the
    generation is ramped up by decades from max(G) = 1, warm-starting each level.

    Args:
        grid: The grid
        psi0: Order-zero potential
        laser: Beam
        scaled: Scaled parameters
        settings: Solver settings
        psi_contact: psi0 on the boundary faces; adjacent cell values if omitted

    Returns:
        (phip0, Newton diagnostics)

    Raises:
        NewtonError: If the last level of the ramp does not converge
    """
    settings = settings or SolverSettings()
    phi0 = scaled.phi0
    psi_b = psi0.values[grid.bnd_cell] if psi_contact is None else psi_contact
    g = generation(grid, laser).values
    n0 = safe_exp(psi0.values - phi0, "psi0 - phi0")
    rate = r0(n0, scaled)
    u_b = contact_values(grid, phi0, phi0)
    s_b = u_b - psi_b

    def hole_residual(source: FloatArray) -> ResidualCallback:
        def residual(phip: FloatArray) -> tuple[FloatArray, sp.spmatrix]:
            s = phip - psi0.values
            coefficient = exponential_coefficient(grid, scaled.mu_p, s, s_b)
            value, jacobian = exponential_diffusion(grid, coefficient, 1.0, phip, u_b)
            excess = safe_exp(phip - phi0, "phip0 - phi0")
            res = value / grid.volumes - source + rate * (excess - 1.0)
            return res, per_volume(grid, jacobian) + sp.diags(rate * excess)

        return residual

    g_max = float(g.max(initial=0.0))
    if g_max > 0.0:
        start = hole_density_guess(grid, psi0, g, rate, scaled, psi_b)
    else:
        start = np.full(grid.n_cells, phi0)
    try:
        result = newton_solve(
            hole_residual(g), start, settings.newton, label="phip0", scale=g_max
        )
    except NewtonError as exc:
        if g_max <= 1.0:
            raise
        logger.warning(format_kv("phip0.ramp", reason=str(exc), g_max=g_max))
        levels = generation_levels(g_max)
        result = _ramped(
            [(hole_residual(g * level), g_max * level) for level in levels],
            hole_density_guess(grid, psi0, g * levels[0], rate, scaled, psi_b),
            settings,
        )
    return Field(grid, result.solution), result


def hole_density_guess(
    grid: Grid,
    psi0: Field,
    g: FloatArray,
    rate: FloatArray,
    scaled: ScaledParams,
    psi_contact: FloatArray,
) -> FloatArray:
    """Initial phip0 from the hole equation written in the density.

    With p0 = exp(phip0 - psi0) the order-zero hole equation is linear:
    -div(mu_p (grad p0 + p0 grad psi0)) + r0 n0 p0 = G + r0, p0 = exp(phi0 - psi0)
    on the contacts. It is solved with Scharfetter-Gummel fluxes and mapped back
    to phip0 = psi0 + ln p0. Where that density is not positive the local balance
    phi0 + ln(1 + G / r0) is used instead.
    """
    phi0 = scaled.phi0
    n0 = safe_exp(psi0.values - phi0, "psi0 - phi0")
    matrix, weights = drift_diffusion_operator(grid, scaled.mu_p, psi0.values, psi_contact)
    matrix = matrix + sp.diags(rate * n0 * grid.volumes)
    load = (g + rate) * grid.volumes
    np.add.at(load, grid.bnd_cell, weights * np.exp(phi0 - psi_contact))
    fallback = phi0 + np.log1p(g / rate)
    try:
        p0 = sparse_solve(matrix, load)
    except SingularSystemError:
        return np.asarray(fallback)
    positive = p0 > 0.0
    guess = np.where(positive, psi0.values + np.log(np.where(positive, p0, 1.0)), fallback)
    return np.asarray(guess)


def generation_levels(g_max: float) -> list[float]:
    """Factors on G for the generation ramp: decades from max G = 1 up to 1."""
    if not g_max > 1.0:
        return [1.0]
    steps = int(np.ceil(np.log10(g_max)))
    return [float(v) for v in np.geomspace(1.0 / g_max, 1.0, steps + 1)]


def _ramped(
    levels: list[tuple[ResidualCallback, float]], start: FloatArray, settings: SolverSettings
) -> NewtonResult:
    """Newton through a sequence of residuals, each level started from the previous solution."""
    iterations = 0
    residuals: list[float] = []
    damping: list[float] = []
    result: Optional[NewtonResult] = None
    for callback, scale in levels:
        result = newton_solve(callback, start, settings.newton, label="phip0", scale=scale)
        iterations += result.iterations
        residuals.extend(result.residuals)
        damping.extend(result.damping)
        start = result.solution
    assert result is not None
    result.iterations = iterations
    result.residuals = residuals
    result.damping = damping
    return result


def recombination0(n0: Field, p0: Field, scaled: ScaledParams) -> FloatArray:
    """R0 = r0(n0) (n0 p0 - 1)."""
    return np.asarray(r0(n0.values, scaled) * (n0.values * p0.values - 1.0))


def solve_phin_star(
    grid: Grid,
    n0: Field,
    p0: Field,
    laser: LaserSpec,
    scaled: ScaledParams,
    operator: Optional[FactorizedOperator] = None,
    n0_contact: Optional[FloatArray] = None,
) -> Field:
    """Solve -div(mu_n n0 grad phin*) = r0(n0)(n0 p0 - 1) - G with zero contact data."""
    if operator is None:
        contact = n0.values[grid.bnd_cell] if n0_contact is None else n0_contact
        operator = FactorizedOperator(electron_operator(grid, n0, contact, scaled.mu_n))
    source = recombination0(n0, p0, scaled) - generation(grid, laser).values
    return operator.solve(source, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class CouplingForms:
    """Face coefficients and contact data entering the order-two coupling."""

    electron_face: FloatArray
    electron_boundary: FloatArray
    hole: ExponentialCoefficient
    w_boundary: FloatArray
    phip_boundary: FloatArray


def coupling_forms(
    grid: Grid,
    electron: EllipticProblem,
    psi0: Field,
    phip0: Field,
    psi_contact: FloatArray,
    scaled: ScaledParams,
) -> CouplingForms:
    phip_b = contact_values(grid, scaled.phi0, scaled.phi0)
    hole = exponential_coefficient(
        grid, scaled.mu_p, phip0.values - psi0.values, phip_b - psi_contact
    )
    return CouplingForms(
        electron_face=electron.a_face,
        electron_boundary=electron.a_boundary,
        hole=hole,
        w_boundary=contact_values(grid, 0.0, 1.0),
        phip_boundary=phip_b,
    )


def compute_ud2(
    grid: Grid,
    forms: CouplingForms,
    phin_star: Field,
    phip0: Field,
    w: Field,
    resistance: float,
) -> float:
    """Second-order contact voltage from the closed-form quotient.

    uD2 = -R (B_n(phin*, w) + B_p(phip0, w)) / (1 + R B_n(w, w)), with B the
    discrete energy forms of the assembled electron and hole operators.

    Args:
        grid: The grid
        forms: Coupling coefficients (see ``coupling_forms``)
        phin_star: phin* field
        phip0: Order-zero hole potential
        w: Solution of the w-problem
        resistance: Scaled resistance R_hat

    Returns:
        uD2 (scaled)
    """
    zero = np.zeros(grid.n_boundary)
    b_nw = bilinear_form(
        grid,
        forms.electron_face,
        forms.electron_boundary,
        phin_star.values,
        zero,
        w.values,
        forms.w_boundary,
    )
    b_pw = bilinear_form(
        grid,
        forms.hole.interior,
        forms.hole.boundary,
        phip0.values,
        forms.phip_boundary,
        w.values,
        forms.w_boundary,
    )
    b_ww = bilinear_form(
        grid,
        forms.electron_face,
        forms.electron_boundary,
        w.values,
        forms.w_boundary,
        w.values,
        forms.w_boundary,
    )
    return float(-resistance * (b_nw + b_pw) / (1.0 + resistance * b_ww))


def contact_flux_ud2(
    grid: Grid, forms: CouplingForms, phin2: Field, phip0: Field, ud2: float
) -> float:
    """Order-two contact current through D2 evaluated directly on the contact faces.

    At a consistent solution ``resistance * contact_flux_ud2(...) == ud2``.
    """
    phin2_b = contact_values(grid, 0.0, ud2)
    electron = boundary_flux(grid, forms.electron_boundary, phin2.values, phin2_b, BoundaryTag.D2)
    hole = boundary_flux(
        grid, forms.hole.boundary, phip0.values, forms.phip_boundary, BoundaryTag.D2
    )
    return electron + hole


def solve_phin2(phin_star: Field, w: Field, ud2: float) -> Field:
    """Superpose phin2 = phin* + uD2 w."""
    if phin_star.grid is not w.grid:
        raise InvalidInputError("phin* and w must live on the same grid")
    return Field(w.grid, phin_star.values + ud2 * w.values)


def psi2_operator(grid: Grid, n0: Field, scaled: ScaledParams) -> EllipticProblem:
    """The -lam^2 div(eps grad .) + n0 problem of the order-two Poisson equation."""
    base = poisson_operator(grid, scaled)
    return EllipticProblem(
        grid=grid, a_face=base.a_face, a_boundary=base.a_boundary, f=base.f, reaction=n0.values
    )


def solve_psi2(
    grid: Grid,
    n0: Field,
    p0: Field,
    phin2: Field,
    ud2: float,
    scaled: ScaledParams,
    operator: Optional[FactorizedOperator] = None,
) -> Field:
    """Solve -lam^2 div(eps grad psi2) + n0 psi2 = p0 + n0 phin2, psi2 = 0 on D1, uD2 on D2."""
    if operator is None:
        operator = FactorizedOperator(psi2_operator(grid, n0, scaled))
    return operator.solve(p0.values + n0.values * phin2.values, 0.0, ud2)


@dataclass(frozen=True, eq=False)
class CascadeContext:
    """Laser-independent part of the cascade, shared read-only across scan points.

    Attributes:
        grid: The grid
        scaled: Scaled parameters
        settings: Solver settings
        delta: Small parameter used for the contact data and the reconstruction
        resistance: Scaled resistance
        doping: Doping field
        psi0: Order-zero potential
        psi0_newton: Newton diagnostics of the psi0 solve
        psi_contact: psi0 on the boundary faces
        n0: exp(psi0 - phi0)
        w: Solution of the w-problem
        torsion: Solution of -div(mu_n n0 grad e) = 1 with e = 0 on both contacts
        electron: The mu_n n0 problem
        electron_lu: Its factorization, used by w and phin*
        psi2_lu: Factorization of the order-two Poisson operator
    """

    grid: Grid
    scaled: ScaledParams
    settings: SolverSettings
    delta: float
    resistance: float
    doping: Field
    psi0: Field
    psi0_newton: NewtonResult
    psi_contact: FloatArray
    n0: Field
    w: Field
    torsion: Field
    electron: EllipticProblem
    electron_lu: FactorizedOperator
    psi2_lu: FactorizedOperator


def prepare_context(
    grid: Grid,
    doping: DopingInput,
    scaled: ScaledParams,
    settings: Optional[SolverSettings] = None,
    resistance: Optional[float] = None,
    delta: Optional[float] = None,
) -> CascadeContext:
    """Solve psi0 and w once and factorize the laser-independent operators.

    Raises:
        StageError: ``psi0`` or ``w`` failed
    """
    settings = settings or SolverSettings()
    delta = scaled.delta if delta is None else delta
    resistance = scaled.resistance if resistance is None else resistance
    c, c_boundary = doping_data(grid, doping)
    psi_contact = electroneutral_potential(c_boundary, delta, scaled.phi0)

    with stage_context("psi0"):
        psi0, psi0_newton = solve_psi0(grid, c, scaled, settings, delta=delta)
        n0 = Field(grid, safe_exp(psi0.values - scaled.phi0, "psi0 - phi0"))

    with stage_context("w"):
        n0_contact = np.exp(psi_contact - scaled.phi0)
        electron = electron_operator(grid, n0, n0_contact, scaled.mu_n)
        electron_lu = FactorizedOperator(electron)
        w = solve_w(grid, n0, operator=electron_lu)
        torsion = electron_lu.solve(np.ones(grid.n_cells), 0.0, 0.0)
        psi2_lu = FactorizedOperator(psi2_operator(grid, n0, scaled))

    logger.info(
        format_kv(
            "cascade.context",
            cells=grid.n_cells,
            psi0_iterations=psi0_newton.iterations,
            psi0_min=psi0.min(),
            psi0_max=psi0.max(),
        )
    )
    return CascadeContext(
        grid=grid,
        scaled=scaled,
        settings=settings,
        delta=delta,
        resistance=resistance,
        doping=c,
        psi0=psi0,
        psi0_newton=psi0_newton,
        psi_contact=psi_contact,
        n0=n0,
        w=w,
        torsion=torsion,
        electron=electron,
        electron_lu=electron_lu,
        psi2_lu=psi2_lu,
    )


@dataclass(frozen=True, eq=False)
class AsymptoticSolution:
    """Fields of the second-order cascade for one laser position.

    The composed potentials and densities follow the expansion
    psi = psi0 + d^2 psi2, phi_n = phi0 + d^2 phin2, phi_p = phip0,
    u_D = d^2 uD2, n = n0 + d^2 n2, p = d^2 p0.
    """

    grid: Grid
    delta: float
    phi0: float
    laser: LaserSpec
    psi0: Field
    phip0: Field
    w: Field
    phin_star: Field
    phin2: Field
    psi2: Field
    ud2: float
    n0: Field
    p0: Field
    n2: Field
    t1: Order0Bounds
    t3: Order2Bounds
    bounds: list[BoundsReport]
    contact_ud2: float
    estimates: list[BoundsReport] = field(default_factory=list)
    iterations: dict[str, int] = field(default_factory=dict)
    runtime_s: float = 0.0

    @property
    def psi(self) -> Field:
        return Field(self.grid, self.psi0.values + self.delta**2 * self.psi2.values)

    @property
    def phi_n(self) -> Field:
        return Field(self.grid, self.phi0 + self.delta**2 * self.phin2.values)

    @property
    def phi_p(self) -> Field:
        return self.phip0

    @property
    def u_d(self) -> float:
        return self.delta**2 * self.ud2

    @property
    def n(self) -> Field:
        return Field(self.grid, self.n0.values + self.delta**2 * self.n2.values)

    @property
    def p(self) -> Field:
        return Field(self.grid, self.delta**2 * self.p0.values)

    @property
    def bounds_ok(self) -> bool:
        return all(report.passed for report in self.bounds)

    @property
    def order_identities(self) -> dict[str, float]:
        """Vanishing lower-order terms the cascade is built on."""
        return dict(ORDER_IDENTITIES)

    def summary(self) -> dict[str, object]:
        return {
            "x0": self.laser.x0,
            "uD2": self.ud2,
            "uD": self.u_d,
            "uD2_contact_flux": self.contact_ud2,
            "ud_bar": self.t3.ud_bar,
            "bounds_ok": self.bounds_ok,
            "bounds": [report.model_dump() for report in self.bounds],
            "estimates": [report.model_dump() for report in self.estimates],
            "iterations": dict(self.iterations),
            "order_identities": self.order_identities,
            "runtime_s": self.runtime_s,
        }

    def dump(self, directory: Path) -> list[Path]:
        """Write every stage field and the bounds report into ``directory``.

        Returns:
            Paths written
        """
        directory = Path(directory)
        stages = {
            "psi0": self.psi0,
            "phip0": self.phip0,
            "w": self.w,
            "phin_star": self.phin_star,
            "phin2": self.phin2,
            "psi2": self.psi2,
            "n0": self.n0,
            "p0": self.p0,
            "n2": self.n2,
        }
        written = []
        for name, stage_field in stages.items():
            path = directory / f"{name}.dat"
            dump_field(path, stage_field)
            written.append(path)
        report = directory / "bounds.txt"
        lines = [r.describe() for r in self.bounds]
        lines += [r.describe() for r in self.estimates]
        lines.append(format_kv("uD2", value=self.ud2))
        atomic_write_text(report, "\n".join(lines) + "\n")
        written.append(report)
        return written


def _p0_over_n0(p0: Field, n0: Field) -> tuple[float, float]:
    ratio = p0.values / n0.values
    return float(ratio.min()), float(ratio.max())


def ud2_bound(context: CascadeContext, p0: Field, phin_star: Field, phip0: Field) -> float:
    """A priori bound on |uD2|.

    R (sup mu_n n0 |phin*|_H1 + sup mu_p p0 |phip0|_H1) |w|_H1, with the suprema
    taken over cell and contact values. Every face coefficient of the coupling
    forms is a logarithmic mean of such values, so it never exceeds them.
    """
    grid, scaled = context.grid, context.scaled
    contact = context.psi_contact[grid.dirichlet_mask]
    n0_sup = max(context.n0.max(), float(np.max(np.exp(contact - scaled.phi0), initial=0.0)))
    p0_sup = max(p0.max(), float(np.max(np.exp(scaled.phi0 - contact), initial=0.0)))
    phip_b = contact_values(grid, scaled.phi0, scaled.phi0)
    energy = scaled.mu_n * n0_sup * h1_norm(grid, phin_star.values, np.zeros(grid.n_boundary))
    energy += scaled.mu_p * p0_sup * h1_norm(grid, phip0.values, phip_b)
    w_norm = h1_norm(grid, context.w.values, contact_values(grid, 0.0, 1.0))
    return float(context.resistance * energy * w_norm)


def solve_point(
    context: CascadeContext, laser: LaserSpec, point: Optional[int] = None
) -> AsymptoticSolution:
    """Run the laser-dependent stages of the cascade for one beam position.

    Args:
        context: Shared laser-independent data
        laser: Beam
        point: Scan point index recorded in stage errors

    Returns:
        AsymptoticSolution with every bound checked

    Raises:
        StageError: A stage failed
    """
    start = time.perf_counter()
    grid, scaled, settings = context.grid, context.scaled, context.settings
    slack = settings.bound_slack
    g_field = generation(grid, laser)

    with stage_context("phip0", point):
        phip0, phip0_newton = solve_phip0(
            grid, context.psi0, laser, scaled, settings, psi_contact=context.psi_contact
        )
        p0 = Field(grid, safe_exp(phip0.values - context.psi0.values, "phip0 - psi0"))

    with stage_context("phin_star", point):
        phin_star = solve_phin_star(
            grid, context.n0, p0, laser, scaled, operator=context.electron_lu
        )

    with stage_context("uD2", point):
        forms = coupling_forms(
            grid, context.electron, context.psi0, phip0, context.psi_contact, scaled
        )
        ud2 = compute_ud2(grid, forms, phin_star, phip0, context.w, context.resistance)
        phin2 = solve_phin2(phin_star, context.w, ud2)
        contact = context.resistance * contact_flux_ud2(grid, forms, phin2, phip0, ud2)

    with stage_context("psi2", point):
        psi2 = solve_psi2(
            grid, context.n0, p0, phin2, ud2, scaled, operator=context.psi2_lu
        )
        n2 = Field(grid, context.n0.values * (psi2.values - phin2.values))

    t1 = order0_bounds(context.psi_contact, context.doping, scaled, g_field.max())
    ud_bar = ud2_bound(context, p0, phin_star, phip0)
    t3 = order2_bounds(t1, ud_bar, *_p0_over_n0(p0, context.n0), context.torsion.max())

    bounds = [
        check_bounds(context.psi0, t1.psi_lower, t1.psi_upper, slack, "psi0"),
        check_bounds(phip0, t1.phip_lower, t1.phip_upper, slack, "phip0"),
        check_bounds(context.w, 0.0, 1.0, slack, "w"),
        check_bounds(phin_star, t3.phin_star_lower, t3.phin_star_upper, slack, "phin_star"),
        check_bounds(np.array([ud2]), -t3.ud_bar, t3.ud_bar, slack, "uD2"),
        check_bounds(phin2, t3.phin2_lower, t3.phin2_upper, slack, "phin2"),
        check_bounds(psi2, t3.psi2_lower, t3.psi2_upper, slack, "psi2"),
    ]
    estimates = [
        check_bounds(
            phin_star, t3.estimate_lower, t3.estimate_upper, slack, "phin_star", checked=False
        )
    ]
    runtime = time.perf_counter() - start
    logger.info(
        format_kv(
            "cascade.point",
            point=point,
            x0=laser.x0,
            uD2=ud2,
            bounds_ok=all(r.passed for r in bounds),
            phip0_iterations=phip0_newton.iterations,
        )
    )
    return AsymptoticSolution(
        grid=grid,
        delta=context.delta,
        phi0=scaled.phi0,
        laser=laser,
        psi0=context.psi0,
        phip0=phip0,
        w=context.w,
        phin_star=phin_star,
        phin2=phin2,
        psi2=psi2,
        ud2=ud2,
        n0=context.n0,
        p0=p0,
        n2=n2,
        t1=t1,
        t3=t3,
        bounds=bounds,
        contact_ud2=contact,
        estimates=estimates,
        iterations={"psi0": context.psi0_newton.iterations, "phip0": phip0_newton.iterations},
        runtime_s=runtime,
    )


def run_cascade(
    grid: Grid,
    doping: DopingInput,
    laser: LaserSpec,
    scaled: ScaledParams,
    resistance: Optional[float] = None,
    delta: Optional[float] = None,
    settings: Optional[SolverSettings] = None,
) -> AsymptoticSolution:
    """Run the full cascade for one beam position.

    Args:
        grid: The grid
        doping: Doping profile or field
        laser: Beam
        scaled: Scaled parameters
        resistance: Scaled resistance; defaults to ``scaled.resistance``
        delta: Small parameter; defaults to ``scaled.delta``
        settings: Solver settings

    Returns:
        AsymptoticSolution

    Raises:
        StageError: Naming the failed stage
    """
    context = prepare_context(grid, doping, scaled, settings, resistance=resistance, delta=delta)
    return solve_point(context, laser)
