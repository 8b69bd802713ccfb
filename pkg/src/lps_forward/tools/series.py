"""Series check tool - expansion coefficients against the finite-difference oracle."""

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from ..config import load_config
from ..errors import InvalidInputError, LpsError
from ..series import series_check as compare_series
from ..units import ScaledParams
from ..utils import error_result
from ..validation import series_params

logger = logging.getLogger(__name__)

# Largest accepted relative deviation from the oracle
DEFAULT_TOLERANCE = 1e-6


def series_check(
    psi: Optional[List[float]] = None,
    phin: Optional[List[float]] = None,
    phip: Optional[List[float]] = None,
    order: int = 3,
    config: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
    seed: int = 0,
    tolerance: float = DEFAULT_TOLERANCE,
) -> Dict[str, Any]:
    """Expand n, p and R to ``order`` and compare with the oracle.

    Coefficients that are not given are drawn uniformly from [-0.5, 0.5]
    with ``seed``. Recombination constants come from the configuration when
    one is given, otherwise from a fixed moderate parameter set.

    Returns:
        Dict with the following structure on success:
            {
                "success": True,
                "passed": bool,
                "order": int,
                "coefficients": {...},
                "oracle": {"n": [...], "p": [...], "R": [...]},
                "deviation": {"n": float, "p": float, "R": float},
                "message": str
            }

        Dict with "success": False, "error" and "error_type" on failure.
    """
    try:
        scaled: ScaledParams
        if config or overrides:
            scaled = load_config(Path(config) if config else None, overrides).scaled()
        else:
            scaled = series_params()
        rng = np.random.default_rng(seed)
        given = [psi, phin, phip]
        coefficients = [
            list(c) if c is not None else rng.uniform(-0.5, 0.5, order + 1).tolist()
            for c in given
        ]
        if any(len(c) < order + 1 for c in coefficients):
            raise InvalidInputError(f"need {order + 1} coefficients per potential")
        result = compare_series(*coefficients, scaled, order)
    except (LpsError, ValueError) as e:
        logger.error(f"series-check failed: {e}")
        return error_result(e)

    deviation = result["deviation"]
    assert isinstance(deviation, dict)
    worst = max(deviation.values())
    return {
        "success": True,
        "passed": worst <= tolerance,
        "order": order,
        **result,
        "message": f"max deviation {worst:.3e} (tolerance {tolerance:.1e})",
    }
