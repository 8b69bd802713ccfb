"""Scan tool - laser scan over the configured beam positions."""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from .. import scan as scan_module
from ..config import load_config
from ..errors import LpsError
from ..utils import error_result

logger = logging.getLogger(__name__)


def run_scan(
    config: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
    out: Optional[str] = None,
    threads: Optional[int] = None,
    fail_fast: Optional[bool] = None,
) -> Dict[str, Any]:
    """Scan the beam across ``laser.scan_start .. laser.scan_stop`` and write ``scan.csv``.

    Args:
        config: Path to a configuration file
        overrides: Dotted-key values replacing file values
        out: Output directory; defaults to ``run.out``
        threads: Worker pool size; defaults to ``run.threads``
        fail_fast: Stop at the first failed point; defaults to ``run.fail_fast``

    Returns:
        Dict with the following structure on success:
            {
                "success": True,
                "passed": bool,        # no failed point and every bound held
                "points": int,
                "failures": [{"index": int, "x0": float, "error": str}, ...],
                "bounds_ok": bool,
                "csv": str,
                "runtime_s": float,
                "message": str
            }

        Dict with "success": False, "error" and "error_type" on failure; under
        fail-fast the error names the failed stage and point.
    """
    try:
        run_config = load_config(Path(config) if config else None, overrides)
        directory = Path(out) if out else run_config.run.out
        result = scan_module.run_scan(run_config, directory, threads, fail_fast)
    except (LpsError, ValueError) as e:
        logger.error(f"scan failed: {e}")
        return error_result(e)

    failures = [
        {"index": row.index, "x0": row.x0_scaled, "error": row.error} for row in result.failures
    ]
    return {
        "success": True,
        "passed": not failures and result.all_bounds_ok,
        "points": len(result.rows),
        "failures": failures,
        "bounds_ok": result.all_bounds_ok,
        "csv": str(directory / "scan.csv"),
        "runtime_s": result.runtime_s,
        "message": f"Scanned {len(result.rows)} positions ({len(failures)} failed)",
    }
