"""Finite-volume assembly, damped Newton driver and bound checks.

Every elliptic problem in the package has the form

    -div(a grad u) + c u = f   in the domain
    u = g                      on the contacts
    a du/dn = 0                elsewhere

discretized with the two-point flux a_f (A_f / d_f) (u_i - u_j) per face.
Contact faces couple a cell centre to the face value over half a cell.
Residuals handed to Newton are divided by the cell volume so that tolerances
read as pointwise equation residuals.
"""

import logging
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
from numpy.typing import ArrayLike, NDArray
from scipy.sparse.linalg import splu

from .errors import InvalidInputError, NewtonError, OverflowFieldError, SingularSystemError
from .mesh import BoundaryTag, Field, Grid
from .models import BoundsReport, NewtonSettings
from .utils import format_kv

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
BoundaryValue = Union[float, FloatArray]

# |ln a_L - ln a_R| below which the logarithmic mean collapses to a_L
LOG_MEAN_CUTOFF = 1e-12
# |d| below which exp(d) - 1 divided by d is evaluated by its Taylor series
_SERIES_CUTOFF = 1e-3


def contact_values(grid: Grid, d1: BoundaryValue, d2: BoundaryValue) -> FloatArray:
    """Per-boundary-face Dirichlet array: d1 on D1 faces, d2 on D2 faces, 0 elsewhere.

    Array arguments must already hold one value per boundary face.
    """
    values = np.zeros(grid.n_boundary)
    for tag, data in ((BoundaryTag.D1, d1), (BoundaryTag.D2, d2)):
        mask = grid.boundary_mask(tag)
        values[mask] = data[mask] if isinstance(data, np.ndarray) else data
    return values


@dataclass(frozen=True, eq=False)
class EllipticProblem:
    """Linear elliptic problem on a grid.

    Attributes:
        grid: The grid
        a_face: Coefficient on every interior face
        a_boundary: Coefficient on every boundary face (ignored on Neumann faces)
        f: Right-hand side per cell (per unit volume)
        d1: Dirichlet value(s) on the first contact
        d2: Dirichlet value(s) on the second contact
        reaction: Optional nonnegative zeroth-order coefficient c per cell
    """

    grid: Grid
    a_face: FloatArray
    a_boundary: FloatArray
    f: FloatArray
    d1: BoundaryValue = 0.0
    d2: BoundaryValue = 0.0
    reaction: Optional[FloatArray] = None

    @property
    def boundary_values(self) -> FloatArray:
        return contact_values(self.grid, self.d1, self.d2)


def face_coefficient(a_left: ArrayLike, a_right: ArrayLike) -> FloatArray:
    """Logarithmic mean (a_L - a_R) / (ln a_L - ln a_R) of positive cell values.

    Returns a_L where |ln a_L - ln a_R| < 1e-12.

    Raises:
        InvalidInputError: If any input is nonpositive

    Example:
        >>> float(face_coefficient(1.0, np.e))
        1.718281828459045
    """
    a_l = np.asarray(a_left, dtype=np.float64)
    a_r = np.asarray(a_right, dtype=np.float64)
    if np.any(~(a_l > 0.0)) or np.any(~(a_r > 0.0)):
        raise InvalidInputError("face coefficient inputs must be positive")
    d = np.log(a_l) - np.log(a_r)
    small = np.abs(d) < LOG_MEAN_CUTOFF
    safe_d = np.where(small, 1.0, d)
    return np.asarray(np.where(small, a_l, (a_l - a_r) / safe_d))


def face_coefficients(
    grid: Grid, cell_values: FloatArray, boundary_values: Optional[FloatArray] = None
) -> tuple[FloatArray, FloatArray]:
    """Interior and boundary face coefficients from positive cell values.

    Boundary faces use the log-mean of the adjacent cell value and the given
    boundary value, or the cell value alone when none is given.
    """
    interior = face_coefficient(cell_values[grid.face_left], cell_values[grid.face_right])
    inner = cell_values[grid.bnd_cell]
    if boundary_values is None:
        return interior, inner.copy()
    boundary = inner.copy()
    mask = grid.dirichlet_mask
    boundary[mask] = face_coefficient(inner[mask], boundary_values[mask])
    return interior, boundary


def _exp_ratio(d: FloatArray) -> tuple[FloatArray, FloatArray]:
    """E(d) = (e^d - 1) / d and its derivative, stable near d = 0."""
    small = np.abs(d) < _SERIES_CUTOFF
    ds = np.where(small, 1.0, d)
    e_large = np.expm1(ds) / ds
    de_large = (ds * np.exp(ds) - np.expm1(ds)) / ds**2
    e_small = 1.0 + d / 2.0 + d**2 / 6.0 + d**3 / 24.0 + d**4 / 120.0
    de_small = 0.5 + d / 3.0 + d**2 / 8.0 + d**3 / 30.0 + d**4 / 144.0
    return np.where(small, e_small, e_large), np.where(small, de_small, de_large)


def exp_log_mean(
    s_left: FloatArray, s_right: FloatArray
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Log-mean of e^{s_L} and e^{s_R} with its partial derivatives.

    Equals ``face_coefficient(exp(s_L), exp(s_R))`` written as e^{s_R} E(s_L - s_R),
    the exponentially fitted face value of a Slotboom-type flux.

    Returns:
        (value, d value / d s_L, d value / d s_R)
    """
    base = np.exp(s_right)
    e, de = _exp_ratio(s_left - s_right)
    return base * e, base * de, base * (e - de)


@dataclass(frozen=True, eq=False)
class ExponentialCoefficient:
    """Face coefficients mobility * logmean(e^s) on a grid, with derivatives.

    Attributes:
        interior: Interior face values
        boundary: Boundary face values (Neumann entries meaningless)
        d_left / d_right: Derivatives of interior values in s of the left/right cell
        d_inner: Derivative of boundary values in s of the adjacent cell
    """

    interior: FloatArray
    boundary: FloatArray
    d_left: FloatArray
    d_right: FloatArray
    d_inner: FloatArray


def exponential_coefficient(
    grid: Grid, mobility: float, s: FloatArray, s_boundary: FloatArray
) -> ExponentialCoefficient:
    """Face values of mobility * e^s for cell values s and contact values s_boundary."""
    value, d_left, d_right = exp_log_mean(s[grid.face_left], s[grid.face_right])
    b_value, b_inner, _ = exp_log_mean(s[grid.bnd_cell], s_boundary)
    return ExponentialCoefficient(
        interior=mobility * value,
        boundary=mobility * b_value,
        d_left=mobility * d_left,
        d_right=mobility * d_right,
        d_inner=mobility * b_inner,
    )


def _check_coefficients(grid: Grid, a_face: FloatArray, a_boundary: FloatArray) -> None:
    mask = grid.dirichlet_mask
    if np.any(~(a_face > 0.0)) or np.any(~(a_boundary[mask] > 0.0)):
        raise InvalidInputError("face coefficients must be positive on every face")


def assemble_matrix(problem: EllipticProblem) -> sp.csr_matrix:
    """Assemble the volume-integrated operator with Dirichlet faces eliminated."""
    grid = problem.grid
    _check_coefficients(grid, problem.a_face, problem.a_boundary)
    t = problem.a_face * grid.interior_transmissibility
    left, right = grid.face_left, grid.face_right
    mask = grid.dirichlet_mask
    diag = np.zeros(grid.n_cells)
    np.add.at(diag, left, t)
    np.add.at(diag, right, t)
    boundary = problem.a_boundary * grid.boundary_transmissibility
    np.add.at(diag, grid.bnd_cell[mask], boundary[mask])
    if problem.reaction is not None:
        diag += problem.reaction * grid.volumes
    rows = np.concatenate([np.arange(grid.n_cells), left, right])
    cols = np.concatenate([np.arange(grid.n_cells), right, left])
    data = np.concatenate([diag, -t, -t])
    return sp.csr_matrix((data, (rows, cols)), shape=(grid.n_cells, grid.n_cells))


def assemble_load(problem: EllipticProblem) -> FloatArray:
    """Volume-integrated right-hand side including the Dirichlet face contributions."""
    grid = problem.grid
    mask = grid.dirichlet_mask
    load = problem.f * grid.volumes
    flux = problem.a_boundary * grid.boundary_transmissibility * problem.boundary_values
    np.add.at(load, grid.bnd_cell[mask], flux[mask])
    return np.asarray(load)


def assemble_diffusion(problem: EllipticProblem) -> tuple[sp.csr_matrix, FloatArray]:
    """Assemble the symmetric positive-definite system of an elliptic problem.

    Args:
        problem: Coefficients, right-hand side and contact data

    Returns:
        (sparse operator, load vector), both integrated over cells

    Raises:
        InvalidInputError: If a face coefficient is nonpositive
    """
    return assemble_matrix(problem), assemble_load(problem)


def sparse_solve(matrix: sp.spmatrix, rhs: FloatArray) -> FloatArray:
    """Direct sparse solve.

    Raises:
        SingularSystemError: If factorization fails or the result is not finite
    """
    try:
        solution = splu(sp.csc_matrix(matrix)).solve(rhs)
    except RuntimeError as e:
        raise SingularSystemError(f"sparse factorization failed: {e}") from e
    if not np.all(np.isfinite(solution)):
        raise SingularSystemError("sparse solve produced non-finite values")
    return np.asarray(solution)


def solve_elliptic(problem: EllipticProblem) -> Field:
    """Assemble and solve a linear elliptic problem."""
    matrix, load = assemble_diffusion(problem)
    return Field(problem.grid, sparse_solve(matrix, load))


class FactorizedOperator:
    """LU factorization of an elliptic operator, reusable for many right-hand sides.

    ``solve`` is safe to call from several threads; calls are serialized on
    the shared factorization.
    """

    def __init__(self, problem: EllipticProblem) -> None:
        self.problem = problem
        try:
            self._lu = splu(sp.csc_matrix(assemble_matrix(problem)))
        except RuntimeError as e:
            raise SingularSystemError(f"sparse factorization failed: {e}") from e
        self._lock = threading.Lock()

    def solve(self, f: FloatArray, d1: BoundaryValue = 0.0, d2: BoundaryValue = 0.0) -> Field:
        """Solve with a new right-hand side and contact data, same coefficients."""
        problem = EllipticProblem(
            grid=self.problem.grid,
            a_face=self.problem.a_face,
            a_boundary=self.problem.a_boundary,
            f=f,
            d1=d1,
            d2=d2,
            reaction=self.problem.reaction,
        )
        load = assemble_load(problem)
        with self._lock:
            solution = self._lu.solve(load)
        if not np.all(np.isfinite(solution)):
            raise SingularSystemError("sparse solve produced non-finite values")
        return Field(problem.grid, solution)


def bilinear_form(
    grid: Grid,
    a_face: FloatArray,
    a_boundary: FloatArray,
    u: FloatArray,
    u_boundary: FloatArray,
    v: FloatArray,
    v_boundary: FloatArray,
) -> float:
    """Discrete integral of a grad u . grad v, contact faces included.

    This is the energy form of the assembled operator: for the solution u of
    -div(a grad u) = f it satisfies the discrete Green identity
    sum_i v_i f_i V_i - B(u, v) = sum over contact faces of v_b times the
    outward flux of -a grad u.
    """
    t = a_face * grid.interior_transmissibility
    du = u[grid.face_right] - u[grid.face_left]
    dv = v[grid.face_right] - v[grid.face_left]
    mask = grid.dirichlet_mask
    tb = (a_boundary * grid.boundary_transmissibility)[mask]
    dub = (u_boundary - u[grid.bnd_cell])[mask]
    dvb = (v_boundary - v[grid.bnd_cell])[mask]
    return float(np.sum(t * du * dv) + np.sum(tb * dub * dvb))


def boundary_flux(
    grid: Grid, a_boundary: FloatArray, u: FloatArray, u_boundary: FloatArray, tag: BoundaryTag
) -> float:
    """Total outward flux of -a grad u through the faces carrying ``tag``."""
    mask = grid.boundary_mask(tag)
    t = (a_boundary * grid.boundary_transmissibility)[mask]
    return float(np.sum(-t * (u_boundary[mask] - u[grid.bnd_cell][mask])))


def interior_flux(grid: Grid, a_face: FloatArray, u: FloatArray) -> FloatArray:
    """Flux of -a grad u through every interior face, oriented left to right."""
    return np.asarray(
        -a_face * grid.interior_transmissibility * (u[grid.face_right] - u[grid.face_left])
    )


def h1_seminorm(grid: Grid, u: FloatArray, u_boundary: FloatArray) -> float:
    """Discrete |grad u|_{L2} over the same face set as ``bilinear_form``."""
    ones_face = np.ones(grid.n_faces)
    ones_bnd = np.ones(grid.n_boundary)
    return float(np.sqrt(bilinear_form(grid, ones_face, ones_bnd, u, u_boundary, u, u_boundary)))


def h1_norm(grid: Grid, u: FloatArray, u_boundary: FloatArray) -> float:
    """Discrete H1 norm: sqrt(|u|_{L2}^2 + |grad u|_{L2}^2)."""
    l2_sq = float(np.sum(grid.volumes * u**2))
    return float(np.sqrt(l2_sq + h1_seminorm(grid, u, u_boundary) ** 2))


def exponential_diffusion(
    grid: Grid,
    coefficient: ExponentialCoefficient,
    ds_du: float,
    u: FloatArray,
    u_boundary: FloatArray,
) -> tuple[FloatArray, sp.csr_matrix]:
    """Cell-integrated -div(a(s) grad u) and its Jacobian in u.

    The face coefficient depends on u through s, with ds/du = ``ds_du`` in the
    cells (+1 for s = phi_p - psi, -1 for s = psi - phi_n). Contact values of
    s are fixed.

    Returns:
        (integrated operator applied to u, sparse Jacobian)
    """
    left, right = grid.face_left, grid.face_right
    t = grid.interior_transmissibility
    jump = u[left] - u[right]
    term = coefficient.interior * t * jump

    mask = grid.dirichlet_mask
    cells = grid.bnd_cell[mask]
    tb = grid.boundary_transmissibility[mask]
    b_jump = u[cells] - u_boundary[mask]
    b_term = coefficient.boundary[mask] * tb * b_jump

    value = np.zeros(grid.n_cells)
    np.add.at(value, left, term)
    np.subtract.at(value, right, term)
    np.add.at(value, cells, b_term)

    d_term_dl = t * (coefficient.d_left * ds_du * jump + coefficient.interior)
    d_term_dr = t * (coefficient.d_right * ds_du * jump - coefficient.interior)
    d_bterm = tb * (coefficient.d_inner[mask] * ds_du * b_jump + coefficient.boundary[mask])

    rows = np.concatenate([left, left, right, right, cells])
    cols = np.concatenate([left, right, left, right, cells])
    data = np.concatenate([d_term_dl, d_term_dr, -d_term_dl, -d_term_dr, d_bterm])
    jacobian = sp.csr_matrix((data, (rows, cols)), shape=(grid.n_cells, grid.n_cells))
    return value, jacobian


def bernoulli(x: ArrayLike) -> FloatArray:
    """B(x) = x / (e^x - 1) with B(0) = 1.

    Example:
        >>> float(bernoulli(0.0))
        1.0
    """
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        e, _ = _exp_ratio(np.asarray(x, dtype=np.float64))
        return np.asarray(1.0 / e)


def drift_diffusion_operator(
    grid: Grid, mobility: float, psi: FloatArray, psi_boundary: FloatArray
) -> tuple[sp.csr_matrix, FloatArray]:
    """Scharfetter-Gummel discretization of -div(mobility (grad p + p grad psi)) in p.

    The flux through a face from cell L to cell R is
    mobility * T * (B(psi_R - psi_L) p_L - B(psi_L - psi_R) p_R).

    Returns:
        (cell-integrated matrix with Dirichlet faces eliminated, per boundary face
        weight multiplying the contact value of p in the load; zero on Neumann faces)
    """
    left, right = grid.face_left, grid.face_right
    t = mobility * grid.interior_transmissibility
    jump = psi[right] - psi[left]
    forward, backward = t * bernoulli(jump), t * bernoulli(-jump)

    mask = grid.dirichlet_mask
    cells = grid.bnd_cell[mask]
    tb = mobility * grid.boundary_transmissibility[mask]
    b_jump = psi_boundary[mask] - psi[cells]
    weights = np.zeros(grid.n_boundary)
    weights[mask] = tb * bernoulli(-b_jump)

    rows = np.concatenate([left, left, right, right, cells])
    cols = np.concatenate([left, right, left, right, cells])
    data = np.concatenate([forward, -backward, -forward, backward, tb * bernoulli(b_jump)])
    matrix = sp.csr_matrix((data, (rows, cols)), shape=(grid.n_cells, grid.n_cells))
    return matrix, weights


ResidualCallback = Callable[[FloatArray], tuple[FloatArray, sp.spmatrix]]


@dataclass
class NewtonResult:
    """Outcome of ``newton_solve``.

    Attributes:
        solution: Final iterate
        iterations: Number of Newton updates
        residual_norm: Max-norm of the final residual
        residuals: Residual max-norm of every iterate, initial guess first
        damping: Line-search factor accepted at each update
        converged_by: ``residual`` or ``step``
        tolerance: Residual tolerance in effect, abs_tol * max(1, scale)
    """

    solution: FloatArray
    iterations: int
    residual_norm: float
    residuals: list[float] = field(default_factory=list)
    damping: list[float] = field(default_factory=list)
    converged_by: str = "residual"
    tolerance: float = 0.0


def _evaluate(callback: ResidualCallback, u: FloatArray) -> tuple[float, FloatArray, sp.spmatrix]:
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            residual, jacobian = callback(u)
    except OverflowFieldError:
        return float("inf"), np.empty(0), sp.csr_matrix((0, 0))
    norm = float(np.max(np.abs(residual))) if residual.size else 0.0
    if not np.isfinite(norm):
        norm = float("inf")
    return norm, residual, jacobian


def newton_solve(
    callback: ResidualCallback,
    initial: FloatArray,
    settings: NewtonSettings,
    label: str = "newton",
    scale: float = 1.0,
) -> NewtonResult:
    """Damped Newton iteration with a halving line search.

    Each update is first capped to ``settings.max_update`` in max-norm, then
    halved until the residual max-norm decreases; the smallest admissible
    factor is ``settings.min_damping``. Iteration stops when the residual
    max-norm is at most ``abs_tol * max(1, scale)`` or when an update smaller
    than ``step_tol * (1 + |u|)`` has been applied.

    Args:
        callback: Maps an iterate to (residual, sparse Jacobian)
        initial: Initial guess
        settings: Tolerances and damping parameters
        label: Stage name used in log records and errors
        scale: Magnitude of the source terms; residuals are measured relative to it

    Returns:
        NewtonResult with the solution and the residual history

    Raises:
        InvalidInputError: If the residual at the initial guess is not finite
        NewtonError: If the line search fails or max_iter is exhausted
        SingularSystemError: If a Jacobian cannot be factorized
    """
    u = np.array(initial, dtype=np.float64)
    norm, residual, jacobian = _evaluate(callback, u)
    if not np.isfinite(norm):
        raise InvalidInputError(f"{label}: residual is not finite at the initial guess")
    if not (np.isfinite(scale) and scale >= 0.0):
        raise InvalidInputError(f"{label}: residual scale must be finite and >= 0, got {scale}")
    tolerance = settings.abs_tol * max(1.0, scale)
    result = NewtonResult(
        solution=u, iterations=0, residual_norm=norm, residuals=[norm], tolerance=tolerance
    )

    while norm > tolerance:
        if result.iterations >= settings.max_iter:
            raise NewtonError(
                f"{label}: no convergence after {result.iterations} iterations "
                f"(residual {norm:.3e}, tolerance {tolerance:.3e})",
                result.residuals,
                result.iterations,
            )
        step = sparse_solve(jacobian, -residual)
        step_norm = float(np.max(np.abs(step)))
        result.iterations += 1

        if step_norm <= settings.step_tol * (1.0 + float(np.max(np.abs(u)))):
            u = u + step
            norm, residual, jacobian = _evaluate(callback, u)
            result.residuals.append(norm)
            result.damping.append(1.0)
            result.converged_by = "step"
            break

        factor = min(1.0, settings.max_update / step_norm)
        while True:
            trial = u + factor * step
            trial_norm, trial_residual, trial_jacobian = _evaluate(callback, trial)
            if trial_norm < norm:
                break
            factor /= 2.0
            if factor < settings.min_damping:
                raise NewtonError(
                    f"{label}: line search failed at iteration {result.iterations} "
                    f"(residual {norm:.3e})",
                    result.residuals,
                    result.iterations,
                )
        u, norm, residual, jacobian = trial, trial_norm, trial_residual, trial_jacobian
        result.residuals.append(norm)
        result.damping.append(factor)
        logger.debug(
            format_kv(
                "newton.iteration",
                stage=label,
                iteration=result.iterations,
                residual=norm,
                damping=factor,
            )
        )

    result.solution = u
    result.residual_norm = norm
    logger.info(
        format_kv(
            "newton.converged",
            stage=label,
            iterations=result.iterations,
            residual=norm,
            tolerance=tolerance,
            by=result.converged_by,
        )
    )
    return result


def check_bounds(
    field: Union[Field, FloatArray],
    lower: float,
    upper: float,
    slack: float,
    name: str = "field",
    checked: bool = True,
) -> BoundsReport:
    """Compare a field's range against analytic bounds.

    Args:
        field: Field (or raw array) to check; never modified
        lower: Analytic lower bound
        upper: Analytic upper bound
        slack: Tolerance on both sides
        name: Field name recorded in the report
        checked: False to report an estimate without enforcing it

    Returns:
        BoundsReport whose ``passed`` flag is
        lower - slack <= min and max <= upper + slack

    Raises:
        InvalidInputError: If a bound is not finite
    """
    if not (np.isfinite(lower) and np.isfinite(upper)):
        raise InvalidInputError(f"bounds for {name} must be finite, got [{lower}, {upper}]")
    values = field.values if isinstance(field, Field) else np.asarray(field)
    report = BoundsReport(
        name=name,
        lower=float(lower),
        upper=float(upper),
        observed_min=float(values.min()),
        observed_max=float(values.max()),
        slack=float(slack),
        checked=checked,
    )
    if not report.passed:
        if checked:
            logger.warning(report.describe())
        else:
            logger.info(report.describe())
    return report


def per_volume(grid: Grid, matrix: sp.spmatrix, factor: float = 1.0) -> sp.csr_matrix:
    """Divide every row of a cell-integrated operator by its cell volume (times ``factor``)."""
    return sp.csr_matrix(sp.diags(factor / grid.volumes) @ matrix)
