"""Tests for laser scans over a shared cascade context."""

import dataclasses
import math

import numpy as np
import pytest

from lps_forward.cascade import prepare_context, solve_point
from lps_forward.config import load_config
from lps_forward.errors import InvalidInputError, StageError
from lps_forward.models import ErrorType, NewtonSettings, SolverSettings
from lps_forward.scan import (
    CSV_HEADER,
    ScanResult,
    ScanRow,
    dominant_frequency,
    run_scan,
    scan_positions,
)

POSITIONS = [0.2, 0.35, 0.5, 0.65, 0.8]


@pytest.fixture
def context(grid_1d, params, sinusoidal):
    return prepare_context(grid_1d, sinusoidal, params)


def _row(index, x0, value):
    return ScanRow(
        index=index, x0_scaled=x0, x0_um=x0, ud2_scaled=value, ud_volts=value, bounds_ok=True
    )


class TestScanPositions:
    """Test the parallel scan driver."""

    def test_rows_in_order(self, context):
        """One row per position, in position order."""
        result = scan_positions(context, POSITIONS, threads=3)
        assert [row.x0_scaled for row in result.rows] == POSITIONS
        assert [row.index for row in result.rows] == list(range(len(POSITIONS)))
        assert not result.failures
        assert result.all_bounds_ok

    def test_matches_single_point(self, context, params):
        """Scan rows equal independent cascade runs."""
        result = scan_positions(context, POSITIONS[:2])
        for row, x0 in zip(result.rows, POSITIONS[:2]):
            assert row.ud2_scaled == solve_point(context, params.laser(x0)).ud2

    def test_threads_do_not_change_output(self, context):
        """Serial and parallel scans produce identical CSV text."""
        serial = scan_positions(context, POSITIONS, threads=1)
        parallel = scan_positions(context, POSITIONS, threads=4)
        assert serial.to_csv() == parallel.to_csv()

    def test_dimensional_columns(self, context, params):
        """Micrometre position and volt signal use the reference scales."""
        row = scan_positions(context, [0.5]).rows[0]
        assert row.x0_um == pytest.approx(0.5 * params.diameter * 1e6)
        assert row.ud_volts == pytest.approx(params.v_th * params.delta**2 * row.ud2_scaled)
        assert row.iters_phip0 is not None and row.iters_phip0 > 0

    def test_dark_scan(self, context):
        """kappa = 0 gives a vanishing signal."""
        result = scan_positions(context, POSITIONS, kappa=0.0)
        assert np.max(np.abs(result.signal())) < 1e-10

    @pytest.mark.parametrize("positions", [[0.5, 0.4], [0.2, 0.2], [-0.1, 0.5], [0.5, 1.1]])
    def test_invalid_positions(self, context, positions):
        """Positions must increase strictly and stay inside [0, 1]."""
        with pytest.raises(InvalidInputError):
            scan_positions(context, positions)

    def test_invalid_threads(self, context):
        """At least one worker."""
        with pytest.raises(InvalidInputError):
            scan_positions(context, [0.5], threads=0)


class TestScanFailures:
    """Test per-point failure handling."""

    @pytest.fixture
    def fragile(self, context):
        """A context whose phip0 Newton stops after one update."""
        settings = SolverSettings(newton=NewtonSettings(max_iter=1, abs_tol=1e-14, step_tol=1e-30))
        return dataclasses.replace(context, settings=settings)

    def test_failed_rows_recorded(self, fragile):
        """Failed points become nan rows and the scan continues."""
        result = scan_positions(fragile, [0.3, 0.6], threads=2)
        assert len(result.rows) == 2
        assert len(result.failures) == 2
        row = result.rows[0]
        assert math.isnan(row.ud2_scaled)
        assert row.error_type == ErrorType.NON_CONVERGENCE
        assert "phip0" in row.error
        assert row.csv_line().split(",")[2:] == ["nan", "nan", "false", "nan"]

    def test_fail_fast(self, fragile):
        """Under fail-fast the first failure raises with stage and point."""
        with pytest.raises(StageError) as e:
            scan_positions(fragile, [0.3, 0.6], fail_fast=True)
        assert e.value.stage == "phip0"
        assert e.value.point == 0


class TestScanResult:
    """Test CSV output and the spectrum helper."""

    def test_csv_format(self):
        """Header plus one 17-digit line per row."""
        result = ScanResult(rows=[_row(0, 0.25, 1.5)])
        lines = result.to_csv().splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[1].startswith("2.5000000000000000e-01,")
        assert lines[1].endswith(",true,nan")

    def test_write_csv(self, tmp_path):
        """CSV files are written atomically, creating directories."""
        result = ScanResult(rows=[_row(0, 0.25, 1.5), _row(1, 0.5, -1.0)])
        path = result.write_csv(tmp_path / "nested" / "scan.csv")
        assert path.read_text() == result.to_csv()

    def test_dominant_frequency(self):
        """A signal with four periods per unit length peaks at 4."""
        x = np.arange(64) / 64.0
        signal = np.sin(2.0 * np.pi * 4.0 * x) + 0.3 * x
        rows = [_row(i, float(a), float(b)) for i, (a, b) in enumerate(zip(x, signal))]
        result = ScanResult(rows=rows)
        assert dominant_frequency(result) == pytest.approx(4.0)

    def test_dominant_frequency_needs_rows(self):
        """Spectra need at least four rows."""
        with pytest.raises(InvalidInputError):
            dominant_frequency(ScanResult(rows=[_row(0, 0.1, 1.0)]))

    def test_dominant_frequency_uneven(self):
        """Uneven spacing is rejected."""
        rows = [_row(i, x, 0.0) for i, x in enumerate([0.0, 0.1, 0.3, 0.4, 0.5])]
        with pytest.raises(InvalidInputError):
            dominant_frequency(ScanResult(rows=rows))


class TestRunScan:
    """Test the configured scan."""

    def test_writes_csv(self, tmp_path, small_run):
        """run_scan writes scan.csv below the output directory."""
        config = load_config(None, small_run)
        result = run_scan(config, out=tmp_path / "scan", threads=2)
        text = (tmp_path / "scan" / "scan.csv").read_text()
        assert text.splitlines()[0] == CSV_HEADER
        assert len(text.splitlines()) == 1 + len(config.laser.positions()) == 1 + len(result.rows)

    @pytest.mark.parametrize("preset", ["si", "gaas"])
    def test_default_preset_scan(self, tmp_path, preset):
        """An unmodified material preset scans without failed rows."""
        overrides = {
            "material.preset": preset,
            "laser.sigma_um": 30,
            "grid.nx": 100,
            "run.out": str(tmp_path),
        }
        result = run_scan(load_config(None, overrides), threads=2)
        assert not result.failures
        assert result.all_bounds_ok
        signal = [row.ud2_scaled for row in result.rows]
        assert all(math.isfinite(value) for value in signal)
        assert max(abs(value) for value in signal) > 0.0
        assert (tmp_path / "scan.csv").exists()
