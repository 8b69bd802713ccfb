"""LPS forward solver - scaling, asymptotic cascade and full drift-diffusion model."""

__version__ = "0.1.0"

from .cascade import AsymptoticSolution, prepare_context, run_cascade, solve_point
from .full_model import FullSolution, delta_sweep, solve_full

__all__ = [
    "AsymptoticSolution",
    "FullSolution",
    "__version__",
    "delta_sweep",
    "prepare_context",
    "run_cascade",
    "solve_full",
    "solve_point",
]
