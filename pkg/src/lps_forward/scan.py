"""Laser scans: one cascade context, many beam positions.

The laser-independent stages (psi0, w and the operator factorizations) are
solved once; every beam position then runs phip0, phin*, uD2 and psi2 on a
worker thread. Rows come back in position order regardless of the pool size.
"""

import logging
import math
import time
from concurrent.futures import Future, ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from .cascade import AsymptoticSolution, CascadeContext, prepare_context, solve_point
from .config import RunConfig
from .errors import InvalidInputError, LpsError, StageError
from .models import ErrorType
from .utils import atomic_write_text, format_kv, format_number

logger = logging.getLogger(__name__)

CSV_HEADER = "x0_scaled,x0_um,uD2_scaled,uD_volts,bounds_ok,iters_phip0"


class ScanRow(BaseModel):
    """Result of one beam position.

    Attributes:
        index: Position index within the scan
        x0_scaled: Beam position (domain width 1)
        x0_um: Beam position in micrometres
        ud2_scaled: Order-two contact voltage; nan when the point failed
        ud_volts: Dimensional voltage v_th d^2 uD2; nan when the point failed
        bounds_ok: Every analytic bound held (False for failed points)
        iters_phip0: Newton iterations of the phip0 stage; None when failed
        error: Failure message of a failed point
        error_type: Failure classification of a failed point
    """

    index: int = Field(..., ge=0)
    x0_scaled: float
    x0_um: float
    ud2_scaled: float
    ud_volts: float
    bounds_ok: bool
    iters_phip0: Optional[int] = None
    error: Optional[str] = None
    error_type: Optional[ErrorType] = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def csv_line(self) -> str:
        iterations = "nan" if self.iters_phip0 is None else str(self.iters_phip0)
        return ",".join(
            [
                format_number(self.x0_scaled),
                format_number(self.x0_um),
                format_number(self.ud2_scaled),
                format_number(self.ud_volts),
                "true" if self.bounds_ok else "false",
                iterations,
            ]
        )


class ScanResult(BaseModel):
    """All rows of a scan in position order, plus timing."""

    rows: list[ScanRow] = Field(default_factory=list)
    runtime_s: float = Field(0.0, ge=0)
    threads: int = Field(1, ge=1)

    @property
    def failures(self) -> list[ScanRow]:
        return [row for row in self.rows if row.failed]

    @property
    def all_bounds_ok(self) -> bool:
        return all(row.bounds_ok for row in self.rows)

    def signal(self) -> np.ndarray:
        """uD2 per position as an array."""
        return np.array([row.ud2_scaled for row in self.rows])

    def to_csv(self) -> str:
        """CSV text; timing is excluded so identical inputs give identical bytes."""
        return "\n".join([CSV_HEADER] + [row.csv_line() for row in self.rows]) + "\n"

    def write_csv(self, path: Path) -> Path:
        atomic_write_text(Path(path), self.to_csv())
        return Path(path)


def _row(index: int, solution: AsymptoticSolution, context: CascadeContext) -> ScanRow:
    s = context.scaled
    return ScanRow(
        index=index,
        x0_scaled=solution.laser.x0,
        x0_um=solution.laser.x0 * s.diameter * 1e6,
        ud2_scaled=solution.ud2,
        ud_volts=s.v_th * solution.u_d,
        bounds_ok=solution.bounds_ok,
        iters_phip0=solution.iterations.get("phip0"),
    )


def _failed_row(index: int, x0: float, context: CascadeContext, error: LpsError) -> ScanRow:
    return ScanRow(
        index=index,
        x0_scaled=x0,
        x0_um=x0 * context.scaled.diameter * 1e6,
        ud2_scaled=math.nan,
        ud_volts=math.nan,
        bounds_ok=False,
        error=str(error),
        error_type=error.error_type,
    )


def _solve_position(
    context: CascadeContext, index: int, x0: float, kappa: Optional[float]
) -> ScanRow:
    laser = context.scaled.laser(x0, kappa)
    solution = solve_point(context, laser, point=index)
    if not solution.bounds_ok:
        failed = [r.name for r in solution.bounds if not r.passed]
        logger.warning(format_kv("scan.bounds", point=index, x0=x0, failed=",".join(failed)))
    return _row(index, solution, context)


def scan_positions(
    context: CascadeContext,
    positions: Sequence[float],
    threads: int = 1,
    fail_fast: bool = False,
    kappa: Optional[float] = None,
) -> ScanResult:
    """Run the laser-dependent cascade stages for every position.

    Args:
        context: Shared laser-independent data
        positions: Beam positions, increasing
        threads: Worker pool size
        fail_fast: Raise on the first failed point instead of recording it
        kappa: Generation amplitude override (0 gives a dark scan)

    Returns:
        ScanResult with one row per position

    Raises:
        InvalidInputError: Positions not increasing or outside [0, 1]
        StageError: A point failed and ``fail_fast`` is set
    """
    xs = [float(x) for x in positions]
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise InvalidInputError("scan positions must be strictly increasing")
    if any(x < 0.0 or x > 1.0 for x in xs):
        raise InvalidInputError("scan positions must lie inside [0, 1]")
    if threads < 1:
        raise InvalidInputError(f"threads must be at least 1, got {threads}")

    start = time.perf_counter()
    rows: list[ScanRow] = []
    with ThreadPoolExecutor(max_workers=threads, thread_name_prefix="lps-scan") as pool:
        futures: list[Future[ScanRow]] = [
            pool.submit(_solve_position, context, i, x0, kappa) for i, x0 in enumerate(xs)
        ]
        for index, (x0, future) in enumerate(zip(xs, futures)):
            try:
                rows.append(future.result())
            except LpsError as e:
                if fail_fast:
                    for pending in futures[index + 1 :]:
                        pending.cancel()
                    if isinstance(e, StageError):
                        raise
                    raise StageError("scan", e, index) from e
                logger.warning(format_kv("scan.failed", point=index, x0=x0, error=e))
                rows.append(_failed_row(index, x0, context, e))

    result = ScanResult(rows=rows, runtime_s=time.perf_counter() - start, threads=threads)
    logger.info(
        format_kv(
            "scan.done",
            points=len(rows),
            failures=len(result.failures),
            threads=threads,
            runtime_s=result.runtime_s,
        )
    )
    return result


def run_scan(
    config: RunConfig,
    out: Optional[Path] = None,
    threads: Optional[int] = None,
    fail_fast: Optional[bool] = None,
) -> ScanResult:
    """Scan the configured beam positions and write ``scan.csv``.

    Args:
        config: Run configuration
        out: Output directory; defaults to ``run.out``
        threads: Pool size override
        fail_fast: Fail-fast override

    Returns:
        ScanResult

    Raises:
        StageError: ``psi0``/``w`` failed, or a point failed under fail-fast
    """
    scaled = config.scaled()
    grid = config.build_grid()
    doping = config.doping_profile(grid, scaled)
    context = prepare_context(grid, doping, scaled, config.settings())
    result = scan_positions(
        context,
        config.laser.positions(),
        threads=config.run.threads if threads is None else threads,
        fail_fast=config.run.fail_fast if fail_fast is None else fail_fast,
    )
    directory = config.run.out if out is None else out
    path = result.write_csv(Path(directory) / "scan.csv")
    logger.info(format_kv("scan.written", path=path))
    return result


def dominant_frequency(result: ScanResult) -> float:
    """Frequency (cycles per unit length) of the largest FFT peak of the detrended signal.

    Raises:
        InvalidInputError: Fewer than four rows, failed rows or uneven spacing
    """
    if len(result.rows) < 4 or result.failures:
        raise InvalidInputError("need at least four successful rows for a spectrum")
    x = np.array([row.x0_scaled for row in result.rows])
    steps = np.diff(x)
    if not np.allclose(steps, steps[0], rtol=1e-6):
        raise InvalidInputError("spectrum needs evenly spaced positions")
    signal = result.signal()
    trend = np.polynomial.polynomial.polyfit(x, signal, 1)
    detrended = signal - np.polynomial.polynomial.polyval(x, trend)
    spectrum = np.abs(np.fft.rfft(detrended))
    frequencies = np.fft.rfftfreq(x.size, d=float(steps[0]))
    peak = int(np.argmax(spectrum[1:])) + 1
    return float(frequencies[peak])
