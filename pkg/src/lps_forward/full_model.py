"""Full scaled drift-diffusion model at finite delta with the resistor coupling.

Unknowns are psi, phi_n, phi_p with n = exp(psi - phi_n), p = d^2 exp(phi_p - psi):

    -lam^2 div(eps grad psi) = C - n + p
    -div(mu_n n grad phi_n)  = d^2 (r_d (exp(phi_p - phi_n) - 1) - G)
    -div(mu_p (p / d^2) grad phi_p) = G - r_d (exp(phi_p - phi_n) - 1)

On D1 the potentials take their equilibrium values, on D2 they are shifted by
the contact voltage u_D, which solves u_D = R i_D(u_D). For fixed u_D the
system is solved by Gummel sweeps with Newton per equation; the scalar
coupling is solved by a safeguarded secant iteration.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict

from .cascade import (
    AsymptoticSolution,
    DopingInput,
    doping_data,
    electroneutral_potential,
    poisson_operator,
    run_cascade,
)
from .errors import InvalidInputError, LpsError, StageError, stage_context
from .mesh import BoundaryTag, Field, Grid
from .models import ErrorType, SolverSettings
from .physics import LaserSpec, generation, r_delta_partials, safe_exp
from .solver import (
    EllipticProblem,
    ExponentialCoefficient,
    assemble_load,
    assemble_matrix,
    bilinear_form,
    boundary_flux,
    contact_values,
    exponential_coefficient,
    exponential_diffusion,
    newton_solve,
    per_volume,
)
from .units import ScaledParams
from .utils import format_kv

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

# Relative secant step treated as converged at machine precision
_SECANT_STEP_FLOOR = 4.0 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class FullProblem:
    """Data fixed across Gummel sweeps and secant iterations."""

    grid: Grid
    scaled: ScaledParams
    settings: SolverSettings
    delta: float
    resistance: float
    doping: Field
    generation: FloatArray
    psi_equilibrium: FloatArray
    poisson: sp.csr_matrix

    @property
    def source_scale(self) -> float:
        """Largest generation value; carrier residuals are measured relative to it."""
        return float(np.max(self.generation, initial=0.0))

    def boundary(self, u_d: float) -> tuple[FloatArray, FloatArray]:
        """Contact values of psi and of both quasi-Fermi potentials at voltage u_d."""
        shift = contact_values(self.grid, 0.0, u_d)
        psi_b = contact_values(self.grid, self.psi_equilibrium, self.psi_equilibrium) + shift
        phi_b = contact_values(self.grid, self.scaled.phi0, self.scaled.phi0) + shift
        return psi_b, phi_b


@dataclass
class FullSolution:
    """Converged state of the full model.

    Attributes:
        grid: The grid
        delta: Small parameter
        psi / phi_n / phi_p: Potentials
        u_d: Contact voltage
        i_d: Contact current through D2 (volume identity)
        coupling_residual: |R i_D - u_D| at the returned state
        gummel_sweeps: Sweeps used by every coupling evaluation
        secant_history: (u_D, g(u_D)) of every coupling evaluation
        cascade_ud: d^2 uD2 of the cascade used as initial guess
    """

    grid: Grid
    delta: float
    psi: Field
    phi_n: Field
    phi_p: Field
    u_d: float
    i_d: float
    coupling_residual: float
    electron: ExponentialCoefficient
    hole: ExponentialCoefficient
    psi_boundary: FloatArray
    phi_boundary: FloatArray
    gummel_sweeps: list[int] = field(default_factory=list)
    secant_history: list[tuple[float, float]] = field(default_factory=list)
    cascade_ud: float = 0.0
    runtime_s: float = 0.0

    @property
    def n(self) -> Field:
        return Field(self.grid, np.exp(self.psi.values - self.phi_n.values))

    @property
    def p(self) -> Field:
        return Field(self.grid, self.delta**2 * np.exp(self.phi_p.values - self.psi.values))

    @property
    def current_balance(self) -> float:
        """Sum of the outward currents through D1 and D2 (zero by charge conservation)."""
        return contact_flux(self, BoundaryTag.D1) + contact_flux(self, BoundaryTag.D2)

    def summary(self) -> dict[str, object]:
        return {
            "delta": self.delta,
            "uD": self.u_d,
            "iD": self.i_d,
            "iD_contact_flux": contact_flux(self, BoundaryTag.D2),
            "current_balance": self.current_balance,
            "coupling_residual": self.coupling_residual,
            "gummel_sweeps": list(self.gummel_sweeps),
            "secant_iterations": len(self.secant_history),
            "cascade_uD": self.cascade_ud,
            "runtime_s": self.runtime_s,
        }


def _coefficients(
    problem: FullProblem,
    psi: FloatArray,
    phi_n: FloatArray,
    phi_p: FloatArray,
    psi_b: FloatArray,
    phi_b: FloatArray,
) -> tuple[ExponentialCoefficient, ExponentialCoefficient]:
    s = problem.scaled
    electron = exponential_coefficient(problem.grid, s.mu_n, psi - phi_n, psi_b - phi_b)
    hole = exponential_coefficient(problem.grid, s.mu_p, phi_p - psi, phi_b - psi_b)
    return electron, hole


def _volume_weight(grid: Grid) -> tuple[FloatArray, FloatArray]:
    """A test function equal to 0 on D1 and 1 on D2 (cell values x)."""
    return grid.x(), contact_values(grid, 0.0, 1.0)


def contact_current(
    solution: FullSolution, grid: Optional[Grid] = None, delta: Optional[float] = None
) -> float:
    """Current through D2 from the discrete volume identity.

    i_D = -B_n(phi_n, w) - d^2 B_p(phi_p, w) for any w vanishing on D1 and
    equal to 1 on D2; exact because the electron and hole sources cancel.

    Args:
        solution: Converged fields
        grid: Grid; defaults to the solution's grid
        delta: Small parameter; defaults to the solution's delta
    """
    grid = solution.grid if grid is None else grid
    delta = solution.delta if delta is None else delta
    w, w_b = _volume_weight(grid)
    b_n = bilinear_form(
        grid,
        solution.electron.interior,
        solution.electron.boundary,
        solution.phi_n.values,
        solution.phi_boundary,
        w,
        w_b,
    )
    b_p = bilinear_form(
        grid,
        solution.hole.interior,
        solution.hole.boundary,
        solution.phi_p.values,
        solution.phi_boundary,
        w,
        w_b,
    )
    return float(-b_n - delta**2 * b_p)


def contact_flux(solution: FullSolution, tag: BoundaryTag = BoundaryTag.D2) -> float:
    """Outward total current through the contact faces carrying ``tag``."""
    grid = solution.grid
    electron = boundary_flux(
        grid, solution.electron.boundary, solution.phi_n.values, solution.phi_boundary, tag
    )
    hole = boundary_flux(
        grid, solution.hole.boundary, solution.phi_p.values, solution.phi_boundary, tag
    )
    return electron + solution.delta**2 * hole


def _solve_poisson(
    problem: FullProblem, psi: FloatArray, phi_n: FloatArray, phi_p: FloatArray, psi_b: FloatArray
) -> FloatArray:
    grid = problem.grid
    base = poisson_operator(grid, problem.scaled)
    load = assemble_load(
        EllipticProblem(
            grid=grid,
            a_face=base.a_face,
            a_boundary=base.a_boundary,
            f=base.f,
            d1=psi_b,
            d2=psi_b,
        )
    ) / grid.volumes
    d2 = problem.delta**2

    def residual(u: FloatArray) -> tuple[FloatArray, sp.spmatrix]:
        n = safe_exp(u - phi_n, "psi - phi_n")
        p = d2 * safe_exp(phi_p - u, "phi_p - psi")
        res = problem.poisson @ u - load - problem.doping.values + n - p
        return res, problem.poisson + sp.diags(n + p)

    return newton_solve(residual, psi, problem.settings.newton, label="poisson").solution


def _solve_electrons(
    problem: FullProblem,
    psi: FloatArray,
    phi_n: FloatArray,
    phi_p: FloatArray,
    psi_b: FloatArray,
    phi_b: FloatArray,
) -> FloatArray:
    """Newton on the electron equation, divided by d^2 so tolerances refer to phin2."""
    grid, s, d = problem.grid, problem.scaled, problem.delta
    scale = 1.0 / d**2
    s_b = psi_b - phi_b

    def residual(u: FloatArray) -> tuple[FloatArray, sp.spmatrix]:
        coefficient = exponential_coefficient(grid, s.mu_n, psi - u, s_b)
        value, jacobian = exponential_diffusion(grid, coefficient, -1.0, u, phi_b)
        n = safe_exp(psi - u, "psi - phi_n")
        p = d**2 * safe_exp(phi_p - psi, "phi_p - psi")
        excess = safe_exp(phi_p - u, "phi_p - phi_n")
        r, r_n, _ = r_delta_partials(n, p, d, s)
        res = scale * value / grid.volumes - (r * (excess - 1.0) - problem.generation)
        d_source = -r_n * n * (excess - 1.0) - r * excess
        return res, per_volume(grid, jacobian, scale) - sp.diags(d_source)

    return newton_solve(
        residual, phi_n, problem.settings.newton, label="phi_n", scale=problem.source_scale
    ).solution


def _solve_holes(
    problem: FullProblem,
    psi: FloatArray,
    phi_n: FloatArray,
    phi_p: FloatArray,
    psi_b: FloatArray,
    phi_b: FloatArray,
) -> FloatArray:
    grid, s, d = problem.grid, problem.scaled, problem.delta
    s_b = phi_b - psi_b
    n = safe_exp(psi - phi_n, "psi - phi_n")

    def residual(u: FloatArray) -> tuple[FloatArray, sp.spmatrix]:
        coefficient = exponential_coefficient(grid, s.mu_p, u - psi, s_b)
        value, jacobian = exponential_diffusion(grid, coefficient, 1.0, u, phi_b)
        p = d**2 * safe_exp(u - psi, "phi_p - psi")
        excess = safe_exp(u - phi_n, "phi_p - phi_n")
        r, _, r_p = r_delta_partials(n, p, d, s)
        res = value / grid.volumes - problem.generation + r * (excess - 1.0)
        d_source = r_p * p * (excess - 1.0) + r * excess
        return res, per_volume(grid, jacobian) + sp.diags(d_source)

    return newton_solve(
        residual, phi_p, problem.settings.newton, label="phi_p", scale=problem.source_scale
    ).solution


@dataclass
class _State:
    psi: FloatArray
    phi_n: FloatArray
    phi_p: FloatArray


def _gummel(problem: FullProblem, state: _State, u_d: float) -> tuple[_State, int]:
    """Gummel sweeps at fixed contact voltage until the update is below gummel_tol."""
    settings = problem.settings
    psi_b, phi_b = problem.boundary(u_d)
    psi, phi_n, phi_p = state.psi, state.phi_n, state.phi_p
    changes: list[float] = []
    for sweep in range(1, settings.gummel_max_iter + 1):
        new_psi = _solve_poisson(problem, psi, phi_n, phi_p, psi_b)
        new_phi_n = _solve_electrons(problem, new_psi, phi_n, phi_p, psi_b, phi_b)
        new_phi_p = _solve_holes(problem, new_psi, new_phi_n, phi_p, psi_b, phi_b)
        change = max(
            float(np.max(np.abs(new_psi - psi))),
            float(np.max(np.abs(new_phi_n - phi_n))),
            float(np.max(np.abs(new_phi_p - phi_p))),
        )
        changes.append(change)
        psi, phi_n, phi_p = new_psi, new_phi_n, new_phi_p
        logger.debug(format_kv("gummel.sweep", sweep=sweep, change=change, uD=u_d))
        if change <= settings.gummel_tol:
            return _State(psi, phi_n, phi_p), sweep
    raise LpsError(
        f"gummel: no convergence after {settings.gummel_max_iter} sweeps "
        f"(last change {changes[-1]:.3e})",
        ErrorType.NON_CONVERGENCE,
    )


def _build_solution(
    problem: FullProblem, state: _State, u_d: float, coupling_residual: float
) -> FullSolution:
    psi_b, phi_b = problem.boundary(u_d)
    electron, hole = _coefficients(problem, state.psi, state.phi_n, state.phi_p, psi_b, phi_b)
    grid = problem.grid
    solution = FullSolution(
        grid=grid,
        delta=problem.delta,
        psi=Field(grid, state.psi),
        phi_n=Field(grid, state.phi_n),
        phi_p=Field(grid, state.phi_p),
        u_d=u_d,
        i_d=0.0,
        coupling_residual=coupling_residual,
        electron=electron,
        hole=hole,
        psi_boundary=psi_b,
        phi_boundary=phi_b,
    )
    solution.i_d = contact_current(solution)
    return solution


def solve_full(
    grid: Grid,
    doping: DopingInput,
    laser: LaserSpec,
    scaled: ScaledParams,
    resistance: Optional[float] = None,
    delta: Optional[float] = None,
    settings: Optional[SolverSettings] = None,
    initial: Optional[AsymptoticSolution] = None,
) -> FullSolution:
    """Solve the full coupled model at finite delta.

    The fields start from the composed cascade solution and the secant
    iteration on g(u) = R i_D(u) - u starts from u = 0 and u = d^2 uD2.

    Args:
        grid: The grid
        doping: Doping profile or field
        laser: Beam
        scaled: Scaled parameters
        resistance: Scaled resistance; defaults to ``scaled.resistance``
        delta: Small parameter; defaults to ``scaled.delta``
        settings: Solver settings
        initial: Cascade solution at the same data; computed when omitted

    Returns:
        FullSolution with |g(u_D)| <= coupling_tol

    Raises:
        InvalidInputError: Nonpositive delta
        StageError: ``cascade``, ``gummel`` or ``coupling`` failed
    """
    start = time.perf_counter()
    settings = settings or SolverSettings()
    delta = scaled.delta if delta is None else delta
    resistance = scaled.resistance if resistance is None else resistance
    if not delta > 0.0:
        raise InvalidInputError(f"delta must be positive, got {delta}")

    if initial is None:
        with stage_context("cascade"):
            initial = run_cascade(grid, doping, laser, scaled, resistance, delta, settings)

    c, c_boundary = doping_data(grid, doping)
    base = poisson_operator(grid, scaled)
    problem = FullProblem(
        grid=grid,
        scaled=scaled,
        settings=settings,
        delta=delta,
        resistance=resistance,
        doping=c,
        generation=generation(grid, laser).values,
        psi_equilibrium=electroneutral_potential(c_boundary, delta, scaled.phi0),
        poisson=per_volume(grid, assemble_matrix(base)),
    )
    state = _State(
        initial.psi.values.copy(), initial.phi_n.values.copy(), initial.phi_p.values.copy()
    )
    sweeps: list[int] = []
    history: list[tuple[float, float]] = []

    def coupling(u: float) -> tuple[float, _State]:
        nonlocal state
        with stage_context("gummel"):
            new_state, used = _gummel(problem, state, u)
        state = new_state
        sweeps.append(used)
        current = _build_solution(problem, new_state, u, 0.0).i_d
        g = resistance * current - u
        history.append((u, g))
        logger.debug(format_kv("coupling.evaluate", uD=u, g=g, sweeps=used))
        return g, new_state

    u_a = 0.0
    g_a, state_a = coupling(u_a)
    u_b, g_b, state_b = u_a, g_a, state_a
    if abs(g_a) > settings.coupling_tol:
        u_b = initial.u_d if initial.u_d != 0.0 else g_a
        g_b, state_b = coupling(u_b)
        for _ in range(settings.coupling_max_iter):
            if abs(g_b) <= settings.coupling_tol:
                break
            if g_b == g_a:
                raise _coupling_error(f"secant stagnated at uD={u_b:.6e} (g={g_b:.3e})")
            u_next = u_b - g_b * (u_b - u_a) / (g_b - g_a)
            if not math.isfinite(u_next):
                raise _coupling_error(f"secant produced a non-finite update from uD={u_b:.6e}")
            u_a, g_a = u_b, g_b
            u_b = u_next
            g_b, state_b = coupling(u_b)
            if abs(u_b - u_a) <= _SECANT_STEP_FLOOR * max(abs(u_b), np.finfo(float).tiny):
                break
        else:
            if abs(g_b) > settings.coupling_tol:
                raise _coupling_error(
                    f"no convergence after {settings.coupling_max_iter} secant iterations "
                    f"(|g|={abs(g_b):.3e})"
                )

    solution = _build_solution(problem, state_b, u_b, abs(g_b))
    solution.gummel_sweeps = sweeps
    solution.secant_history = history
    solution.cascade_ud = initial.u_d
    solution.runtime_s = time.perf_counter() - start
    logger.info(
        format_kv(
            "full.converged",
            delta=delta,
            uD=solution.u_d,
            iD=solution.i_d,
            coupling_residual=solution.coupling_residual,
            evaluations=len(history),
        )
    )
    return solution


def _coupling_error(message: str) -> StageError:
    return StageError("coupling", LpsError(message, ErrorType.NON_CONVERGENCE))


class DeltaSweepRow(BaseModel):
    """One row of the consistency report."""

    model_config = ConfigDict(frozen=True)

    delta: float
    ud_full: float
    ud_cascade: float
    error: float


class DeltaSweepReport(BaseModel):
    """Full model against the cascade for a sequence of delta values.

    Attributes:
        rows: One row per delta, in the given order
        slope: Least-squares slope of log(error) against log(delta)
        decreasing: Whether the error decreases strictly along decreasing delta
    """

    model_config = ConfigDict(frozen=True)

    rows: list[DeltaSweepRow]
    slope: float
    decreasing: bool


def delta_sweep(
    grid: Grid,
    doping: DopingInput,
    laser: LaserSpec,
    scaled: ScaledParams,
    deltas: Sequence[float],
    resistance: Optional[float] = None,
    settings: Optional[SolverSettings] = None,
) -> DeltaSweepReport:
    """Compare u_D of the full model with d^2 uD2 of the cascade for each delta.

    The error is e(d) = |u_D_full - d^2 uD2| / d^2.

    Raises:
        InvalidInputError: Fewer than two deltas
    """
    if len(deltas) < 2:
        raise InvalidInputError("a delta sweep needs at least two values")
    rows = []
    for delta in deltas:
        cascade = run_cascade(grid, doping, laser, scaled, resistance, delta, settings)
        full = solve_full(
            grid, doping, laser, scaled, resistance, delta, settings, initial=cascade
        )
        error = abs(full.u_d - cascade.u_d) / delta**2
        rows.append(
            DeltaSweepRow(delta=delta, ud_full=full.u_d, ud_cascade=cascade.u_d, error=error)
        )
        logger.info(format_kv("delta_sweep.row", delta=delta, uD_full=full.u_d, error=error))

    ordered = sorted(rows, key=lambda row: row.delta, reverse=True)
    errors = [row.error for row in ordered]
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    if all(e > 0.0 for e in errors):
        slope = float(np.polyfit(np.log([r.delta for r in ordered]), np.log(errors), 1)[0])
    else:
        slope = float("inf")
    return DeltaSweepReport(rows=rows, slope=slope, decreasing=decreasing)
