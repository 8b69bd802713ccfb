"""Tensor-product finite-volume grids, cell fields and the field dump format.

The scaled domain is [0, 1] in 1D and [0, 1] x [0, aspect] in 2D. Unknowns sit
at cell centres. Interior faces connect two cells; boundary faces connect one
cell to a face value and carry one tag: Neumann, first contact (D1, grounded)
or second contact (D2, connected through the resistor).

A 1D grid has unit cross-section, so face areas are 1 and the contact area is 1.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Union

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field as PydanticField, model_validator

from .errors import InvalidInputError, LpsError
from .models import ErrorType
from .utils import atomic_write_text, format_number

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]


class BoundaryTag(int, Enum):
    """Boundary face tags."""

    NEUMANN = 0
    D1 = 1
    D2 = 2


class ContactLayout(BaseModel):
    """Placement of the two ohmic contacts.

    Attributes:
        axis: Contacts lie on the min (D1) and max (D2) sides of this axis
        lo: Start of the contact along the other axis, as a fraction of its length (2D only)
        hi: End of the contact along the other axis, as a fraction of its length (2D only)
    """

    model_config = ConfigDict(frozen=True)

    axis: int = PydanticField(0, ge=0, le=1, description="Axis normal to the contacts")
    lo: float = PydanticField(0.0, ge=0, le=1, description="Contact start fraction")
    hi: float = PydanticField(1.0, ge=0, le=1, description="Contact end fraction")

    @model_validator(mode="after")
    def _check_extent(self) -> "ContactLayout":
        if self.hi <= self.lo:
            raise ValueError("contact extent must satisfy lo < hi")
        return self


def _frozen(array: NDArray[np.generic]) -> NDArray[np.generic]:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable cell-centred tensor-product grid.

    Interior faces are oriented from ``face_left`` to ``face_right`` (increasing
    coordinate). Boundary faces carry an outward ``bnd_sign`` along ``bnd_axis``.
    """

    dim: int
    shape: tuple[int, ...]
    lengths: tuple[float, ...]
    widths: tuple[float, ...]
    centers: FloatArray
    volumes: FloatArray
    face_left: IntArray
    face_right: IntArray
    face_area: FloatArray
    face_dist: FloatArray
    face_axis: IntArray
    bnd_cell: IntArray
    bnd_area: FloatArray
    bnd_dist: FloatArray
    bnd_axis: IntArray
    bnd_sign: IntArray
    bnd_center: FloatArray
    bnd_tag: IntArray

    @property
    def n_cells(self) -> int:
        return int(self.volumes.size)

    @property
    def n_faces(self) -> int:
        return int(self.face_left.size)

    @property
    def n_boundary(self) -> int:
        return int(self.bnd_cell.size)

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def interior_transmissibility(self) -> FloatArray:
        """Face area over centre distance for interior faces."""
        return self.face_area / self.face_dist

    @property
    def boundary_transmissibility(self) -> FloatArray:
        """Face area over centre-to-face distance for boundary faces."""
        return self.bnd_area / self.bnd_dist

    def boundary_mask(self, tag: BoundaryTag) -> NDArray[np.bool_]:
        return np.asarray(self.bnd_tag == int(tag))

    @property
    def dirichlet_mask(self) -> NDArray[np.bool_]:
        return np.asarray(self.bnd_tag != int(BoundaryTag.NEUMANN))

    def x(self) -> FloatArray:
        """Cell-centre x coordinates."""
        return np.asarray(self.centers[:, 0])


def build_grid(
    dim: int,
    cells_per_axis: Union[int, tuple[int, ...]],
    contact_layout: ContactLayout | None = None,
    aspect: float = 1.0,
) -> Grid:
    """Build a uniform 1D or 2D grid with tagged contacts.

    Args:
        dim: 1 or 2
        cells_per_axis: Cell count (1D) or (nx, ny) (2D); at least 2 per axis
        contact_layout: Contact placement; defaults to full x-min/x-max sides
        aspect: Height of the 2D domain (its width is 1)

    Returns:
        The grid

    Raises:
        InvalidInputError: Bad dimension, too few cells, or an empty contact

    Example:
        >>> g = build_grid(1, 10)
        >>> g.n_boundary, int((g.bnd_tag == BoundaryTag.D1).sum())
        (2, 1)
    """
    layout = contact_layout or ContactLayout()
    counts = (cells_per_axis,) if isinstance(cells_per_axis, int) else tuple(cells_per_axis)
    if dim not in (1, 2):
        raise InvalidInputError(f"dim must be 1 or 2, got {dim}")
    if len(counts) != dim:
        raise InvalidInputError(f"expected {dim} cell counts, got {counts}")
    if any(n < 2 for n in counts):
        raise InvalidInputError(f"need at least 2 cells per axis, got {counts}")
    if aspect <= 0.0:
        raise InvalidInputError(f"aspect must be positive, got {aspect}")
    if dim == 1 and layout.axis != 0:
        raise InvalidInputError("1D grids only have contacts along axis 0")

    lengths = (1.0,) if dim == 1 else (1.0, aspect)
    widths = tuple(length / n for length, n in zip(lengths, counts))
    axes = [(np.arange(n) + 0.5) * h for n, h in zip(counts, widths)]

    if dim == 1:
        grid = _build_1d(counts[0], widths[0], axes[0])
    else:
        grid = _build_2d(counts, widths, lengths, axes, layout)

    for tag in (BoundaryTag.D1, BoundaryTag.D2):
        if not np.any(grid["bnd_tag"] == int(tag)):
            raise InvalidInputError(f"contact layout leaves contact {tag.name} empty")

    frozen = {key: _frozen(value) for key, value in grid.items()}
    result = Grid(dim=dim, shape=counts, lengths=lengths, widths=widths, **frozen)
    logger.debug(f"Built {dim}D grid shape={counts} faces={result.n_faces}")
    return result


def _build_1d(n: int, h: float, x: FloatArray) -> dict[str, NDArray[np.generic]]:
    cells = np.arange(n)
    return {
        "centers": x.reshape(-1, 1).copy(),
        "volumes": np.full(n, h),
        "face_left": cells[:-1].astype(np.int64),
        "face_right": cells[1:].astype(np.int64),
        "face_area": np.ones(n - 1),
        "face_dist": np.full(n - 1, h),
        "face_axis": np.zeros(n - 1, dtype=np.int64),
        "bnd_cell": np.array([0, n - 1], dtype=np.int64),
        "bnd_area": np.ones(2),
        "bnd_dist": np.full(2, 0.5 * h),
        "bnd_axis": np.zeros(2, dtype=np.int64),
        "bnd_sign": np.array([-1, 1], dtype=np.int64),
        "bnd_center": np.array([[0.0], [1.0]]),
        "bnd_tag": np.array([BoundaryTag.D1, BoundaryTag.D2], dtype=np.int64),
    }


def _build_2d(
    counts: tuple[int, ...],
    widths: tuple[float, ...],
    lengths: tuple[float, ...],
    axes: list[FloatArray],
    layout: ContactLayout,
) -> dict[str, NDArray[np.generic]]:
    nx, ny = counts
    hx, hy = widths
    index = np.arange(nx * ny).reshape(ny, nx)  # cell (i, j) -> i + nx * j
    X, Y = np.meshgrid(axes[0], axes[1])

    # interior faces: x-normal then y-normal
    xl, xr = index[:, :-1].ravel(), index[:, 1:].ravel()
    yl, yr = index[:-1, :].ravel(), index[1:, :].ravel()
    face_left = np.concatenate([xl, yl]).astype(np.int64)
    face_right = np.concatenate([xr, yr]).astype(np.int64)
    face_area = np.concatenate([np.full(xl.size, hy), np.full(yl.size, hx)])
    face_dist = np.concatenate([np.full(xl.size, hx), np.full(yl.size, hy)])
    face_axis = np.concatenate([np.zeros(xl.size), np.ones(yl.size)]).astype(np.int64)

    cells, area, dist, axis, sign, centers = [], [], [], [], [], []
    sides = (
        (index[:, 0], 0, -1, np.column_stack([np.zeros(ny), axes[1]])),
        (index[:, -1], 0, 1, np.column_stack([np.full(ny, lengths[0]), axes[1]])),
        (index[0, :], 1, -1, np.column_stack([axes[0], np.zeros(nx)])),
        (index[-1, :], 1, 1, np.column_stack([axes[0], np.full(nx, lengths[1])])),
    )
    for side_cells, side_axis, side_sign, side_centers in sides:
        cells.append(side_cells)
        area.append(np.full(side_cells.size, hy if side_axis == 0 else hx))
        dist.append(np.full(side_cells.size, 0.5 * (hx if side_axis == 0 else hy)))
        axis.append(np.full(side_cells.size, side_axis))
        sign.append(np.full(side_cells.size, side_sign))
        centers.append(side_centers)

    bnd_axis = np.concatenate(axis).astype(np.int64)
    bnd_sign = np.concatenate(sign).astype(np.int64)
    bnd_center = np.vstack(centers)

    # contacts: faces normal to layout.axis whose centre lies inside the extent
    other = 1 - layout.axis
    along = bnd_center[:, other] / lengths[other]
    on_contact = (bnd_axis == layout.axis) & (along >= layout.lo) & (along <= layout.hi)
    bnd_tag = np.full(bnd_axis.size, int(BoundaryTag.NEUMANN), dtype=np.int64)
    bnd_tag[on_contact & (bnd_sign < 0)] = int(BoundaryTag.D1)
    bnd_tag[on_contact & (bnd_sign > 0)] = int(BoundaryTag.D2)

    return {
        "centers": np.column_stack([X.ravel(), Y.ravel()]),
        "volumes": np.full(nx * ny, hx * hy),
        "face_left": face_left,
        "face_right": face_right,
        "face_area": face_area,
        "face_dist": face_dist,
        "face_axis": face_axis,
        "bnd_cell": np.concatenate(cells).astype(np.int64),
        "bnd_area": np.concatenate(area),
        "bnd_dist": np.concatenate(dist),
        "bnd_axis": bnd_axis,
        "bnd_sign": bnd_sign,
        "bnd_center": bnd_center,
        "bnd_tag": bnd_tag,
    }


@dataclass(frozen=True, eq=False)
class Field:
    """One finite scalar value per cell of ``grid``.

    The value array is copied and made read-only on construction.
    """

    grid: Grid
    values: FloatArray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.shape != (self.grid.n_cells,):
            raise InvalidInputError(
                f"field has shape {values.shape}, grid has {self.grid.n_cells} cells"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("field contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def min(self) -> float:
        return float(self.values.min())

    def max(self) -> float:
        return float(self.values.max())

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.n_cells, float(value)))


FaceValues = Union[FloatArray, Callable[[FloatArray], FloatArray]]


def boundary_integral(grid: Grid, f: FaceValues, tag: BoundaryTag) -> float:
    """Integrate a boundary-face quantity over all faces carrying ``tag``.

    Args:
        grid: The grid
        f: Array with one value per boundary face, or a callable mapping the
            (n_boundary, dim) face-centre coordinates to such an array
        tag: Which part of the boundary to integrate over

    Returns:
        Sum over tagged faces of face value times face area
    """
    values = f(grid.bnd_center) if callable(f) else f
    values = np.broadcast_to(np.asarray(values, dtype=np.float64), (grid.n_boundary,))
    mask = grid.boundary_mask(tag)
    return float(np.sum(values[mask] * grid.bnd_area[mask]))


def cell_divergence(grid: Grid, interior_flux: FloatArray, boundary_flux: FloatArray) -> FloatArray:
    """Net outflow of every cell from oriented face fluxes.

    Args:
        grid: The grid
        interior_flux: Flux through each interior face from ``face_left`` to ``face_right``
        boundary_flux: Outward flux through each boundary face

    Returns:
        Per-cell net outflow (integrated, not divided by volume)
    """
    out = np.zeros(grid.n_cells)
    np.add.at(out, grid.face_left, interior_flux)
    np.subtract.at(out, grid.face_right, interior_flux)
    np.add.at(out, grid.bnd_cell, boundary_flux)
    return out


def dump_field(path: Path, field: Field) -> None:
    """Write a field in the plain-text dump format.

    The first line is ``shape n`` or ``shape nx ny``; every following line is
    ``x [y] value`` in 17-significant-digit scientific notation.

    Args:
        path: Destination file (written atomically)
        field: Field to dump
    """
    grid = field.grid
    lines = ["shape " + " ".join(str(n) for n in grid.shape)]
    for coords, value in zip(grid.centers, field.values):
        lines.append(" ".join(format_number(float(c)) for c in coords) + " " + format_number(value))
    atomic_write_text(Path(path), "\n".join(lines) + "\n")


def load_field(path: Path, grid: Grid) -> Field:
    """Read a field dump and attach it to ``grid``.

    Args:
        path: Dump file
        grid: Grid the values belong to; shape and cell centres must match

    Returns:
        The field

    Raises:
        LpsError: ``io_error`` if unreadable, ``invalid_input`` if it does not match the grid
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise LpsError(f"Cannot read field dump {path}: {e}", ErrorType.IO_ERROR) from e

    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith("shape"):
        raise InvalidInputError(f"{path}: missing 'shape' header line")
    try:
        shape = tuple(int(token) for token in lines[0].split()[1:])
        rows = np.array([[float(token) for token in line.split()] for line in lines[1:]])
    except ValueError as e:
        raise InvalidInputError(f"{path}: malformed field dump: {e}") from e

    if shape != grid.shape:
        raise InvalidInputError(f"{path}: dump shape {shape} does not match grid {grid.shape}")
    if rows.shape != (grid.n_cells, grid.dim + 1):
        raise InvalidInputError(f"{path}: expected {grid.n_cells} rows of {grid.dim + 1} numbers")
    if not np.allclose(rows[:, :-1], grid.centers, rtol=0.0, atol=1e-9):
        raise InvalidInputError(f"{path}: cell coordinates do not match the grid")
    return Field(grid, rows[:, -1])
