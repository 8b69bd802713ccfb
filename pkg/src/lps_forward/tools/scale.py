"""Scale parameters tool - report the nondimensional constants of a configuration."""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from ..config import load_config
from ..errors import LpsError
from ..units import descale_params, intrinsic_density, scaling_table
from ..utils import error_result

logger = logging.getLogger(__name__)


def scale_parameters(
    config: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> Dict[str, Any]:
    """Compute lambda, delta and every hatted constant.

    Args:
        config: Path to a configuration file; defaults only when omitted
        overrides: Dotted-key values replacing file values

    Returns:
        Dict with the following structure on success:
            {
                "success": True,
                "material": str,
                "lam": float,
                "delta": float,
                "intrinsic_density_cm3": float,
                "scaled": {name: float, ...},
                "descaled": {name: float, ...},
                "message": str
            }

        Dict with "success": False, "error" and "error_type" on failure.

    Example:
        >>> result = scale_parameters(overrides={"laser.sigma_um": 30})
        >>> 1e-5 < result["lam"] < 2e-5
        True
    """
    try:
        run_config = load_config(Path(config) if config else None, overrides)
        physical = run_config.physical()
        scaled = run_config.scaled()
    except (LpsError, ValueError) as e:
        logger.error(f"scale failed: {e}")
        return error_result(e)

    return {
        "success": True,
        "material": run_config.material.preset,
        "lam": scaled.lam,
        "delta": scaled.delta,
        "intrinsic_density_cm3": intrinsic_density(physical),
        "scaled": scaling_table(scaled),
        "descaled": descale_params(scaled),
        "message": f"lambda={scaled.lam:.6e} delta={scaled.delta:.6e}",
    }
