"""Solve tools - one beam position with the asymptotic cascade or the full model.

Both tools write their fields as dumps below the output directory:
``<out>/asymptotic/`` and ``<out>/full/``.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

from ..cascade import run_cascade
from ..config import RunConfig, load_config
from ..errors import LpsError
from ..full_model import solve_full as solve_full_model
from ..mesh import dump_field
from ..units import descale_signal
from ..utils import error_result

logger = logging.getLogger(__name__)


def _setup(config: Optional[str], overrides: Optional[Dict[str, Any]]) -> RunConfig:
    return load_config(Path(config) if config else None, overrides)


def solve_asymptotic(
    config: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
    out: Optional[str] = None,
    x0: Optional[float] = None,
) -> Dict[str, Any]:
    """Run the second-order cascade for one beam position.

    Args:
        config: Path to a configuration file
        overrides: Dotted-key values replacing file values
        out: Output directory; defaults to ``run.out``
        x0: Beam position; defaults to ``laser.x0``

    Returns:
        Dict with the following structure on success:
            {
                "success": True,
                "passed": bool,          # every analytic bound held
                "x0": float,
                "uD2": float,
                "uD": float,
                "uD_volts": float,
                "bounds": [...],
                "fields": [str, ...],    # written dump files
                "message": str,
                ...
            }

        Dict with "success": False, "error" and "error_type" on failure.
    """
    try:
        run_config = _setup(config, overrides)
        scaled = run_config.scaled()
        grid = run_config.build_grid()
        doping = run_config.doping_profile(grid, scaled)
        laser = scaled.laser(run_config.laser.x0 if x0 is None else x0)
        solution = run_cascade(grid, doping, laser, scaled, settings=run_config.settings())
        directory = Path(out) if out else run_config.run.out
        written = solution.dump(directory / "asymptotic")
    except (LpsError, ValueError) as e:
        logger.error(f"solve-asym failed: {e}")
        return error_result(e)

    volts, _ = descale_signal(solution.u_d, 0.0, scaled)
    failed = [r.name for r in solution.bounds if not r.passed]
    message = (
        f"uD2={solution.ud2:.6e} at x0={laser.x0}"
        if not failed
        else f"bounds violated: {', '.join(failed)}"
    )
    return {
        "success": True,
        "passed": solution.bounds_ok,
        **solution.summary(),
        "uD_volts": volts,
        "fields": [str(path) for path in written],
        "message": message,
    }


def solve_full(
    config: Optional[str] = None,
    overrides: Optional[Dict[str, Any]] = None,
    out: Optional[str] = None,
    x0: Optional[float] = None,
) -> Dict[str, Any]:
    """Solve the full coupled model for one beam position.

    ``solver.delta`` replaces the physical small parameter when set.

    Args:
        config: Path to a configuration file
        overrides: Dotted-key values replacing file values
        out: Output directory; defaults to ``run.out``
        x0: Beam position; defaults to ``laser.x0``

    Returns:
        Dict with the following structure on success:
            {
                "success": True,
                "delta": float,
                "uD": float,
                "uD_volts": float,
                "iD": float,
                "iD_amperes": float,
                "coupling_residual": float,
                "cascade_uD": float,
                "fields": [str, ...],
                "message": str,
                ...
            }

        Dict with "success": False, "error" and "error_type" on failure.
    """
    try:
        run_config = _setup(config, overrides)
        scaled = run_config.scaled()
        grid = run_config.build_grid()
        doping = run_config.doping_profile(grid, scaled)
        laser = scaled.laser(run_config.laser.x0 if x0 is None else x0)
        solution = solve_full_model(
            grid,
            doping,
            laser,
            scaled,
            delta=run_config.solver.delta,
            settings=run_config.settings(),
        )
        directory = (Path(out) if out else run_config.run.out) / "full"
        written = []
        fields = {"psi": solution.psi, "phin": solution.phi_n, "phip": solution.phi_p}
        for name, values in fields.items():
            path = directory / f"{name}.dat"
            dump_field(path, values)
            written.append(str(path))
    except (LpsError, ValueError) as e:
        logger.error(f"solve-full failed: {e}")
        return error_result(e)

    volts, amperes = descale_signal(solution.u_d, solution.i_d, scaled)
    return {
        "success": True,
        **solution.summary(),
        "uD_volts": volts,
        "iD_amperes": amperes,
        "fields": written,
        "message": (
            f"uD={solution.u_d:.6e} after {len(solution.secant_history)} coupling evaluations"
        ),
    }
