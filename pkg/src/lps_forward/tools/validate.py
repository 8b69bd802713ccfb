"""Validate tool - run the acceptance suite."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..config import load_config
from ..errors import LpsError
from ..utils import error_result
from ..validation import run_validate

logger = logging.getLogger(__name__)


def run_validation(
    config: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
    out: Optional[str] = None,
    only: Optional[List[str]] = None,
) -> Dict[str, Any]:
    """Run the acceptance criteria and write ``validation.json``.

    Args:
        config: Path to a configuration file
        overrides: Dotted-key values replacing file values
        out: Output directory; defaults to ``run.out``
        only: Criterion names to run; all when omitted

    Returns:
        Dict with the following structure on success:
            {
                "success": True,
                "passed": bool,
                "criteria": [{"name": str, "passed": bool, "runtime_s": float,
                              "details": {...}}, ...],
                "failed": [str, ...],
                "report": str,
                "message": str
            }

        Dict with "success": False, "error" and "error_type" on failure.
    """
    try:
        run_config = load_config(Path(config) if config else None, overrides)
        directory = Path(out) if out else run_config.run.out
        report = run_validate(run_config, directory, only)
    except (LpsError, ValueError) as e:
        logger.error(f"validate failed: {e}")
        return error_result(e)

    failed = report.failed
    return {
        "success": True,
        "passed": report.passed,
        "criteria": [c.model_dump() for c in report.criteria],
        "failed": failed,
        "report": str(directory / "validation.json"),
        "message": (
            f"All {len(report.criteria)} criteria passed"
            if not failed
            else f"Failed criteria: {', '.join(failed)}"
        ),
    }
