"""Command-line front end ``lps-forward``.

Every subcommand calls the matching tool, prints its JSON result on stdout and
exits with 0 (success), 2 (configuration or input error), 3 (solver failure)
or 4 (a check failed). Logs go to stderr.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .config import load_config
from .errors import LpsError
from .models import ErrorType
from .tools import scale, scan, series, solve, validate

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_CHECK = 4

_INPUT_ERRORS = {ErrorType.CONFIG_ERROR, ErrorType.INVALID_INPUT, ErrorType.IO_ERROR}
_LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def exit_code(result: dict[str, Any]) -> int:
    """Map a tool result onto the process exit status."""
    if not result.get("success", False):
        error_type = result.get("error_type")
        if error_type in {e.value for e in _INPUT_ERRORS}:
            return EXIT_INPUT
        return EXIT_SOLVER
    if result.get("passed") is False:
        return EXIT_CHECK
    return EXIT_OK


def _float_list(text: str) -> list[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from e


def _key_value(text: str) -> tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    return key.strip(), value.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lps-forward",
        description="Forward solver for lateral photovoltage scanning.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--out", type=Path, help="output directory (run.out)")
    common.add_argument("--threads", type=int, help="worker threads (run.threads)")
    common.add_argument(
        "--fail-fast", action="store_true", default=None, help="stop at the first failed point"
    )
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        type=_key_value,
        default=[],
        metavar="KEY=VALUE",
        help="override a dotted configuration key (repeatable)",
    )
    common.add_argument(
        "--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="log level on stderr"
    )

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("scale", parents=[common], help="print lambda, delta and scaled constants")
    for name, text in (
        ("solve-asym", "second-order cascade at one beam position"),
        ("solve-full", "full coupled model at one beam position"),
    ):
        sub = commands.add_parser(name, parents=[common], help=text)
        sub.add_argument("--x0", type=float, help="scaled beam position (laser.x0)")
    commands.add_parser("scan", parents=[common], help="laser scan written to scan.csv")

    check = commands.add_parser(
        "series-check", parents=[common], help="series coefficients against the oracle"
    )
    check.add_argument("--order", type=int, default=3)
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--tolerance", type=float, default=series.DEFAULT_TOLERANCE)
    for name in ("psi", "phin", "phip"):
        check.add_argument(f"--{name}", type=_float_list, help=f"{name} coefficients, k = 0..K")

    suite = commands.add_parser("validate", parents=[common], help="run the acceptance suite")
    suite.add_argument("--only", nargs="+", metavar="CRITERION", help="criteria to run")
    return parser


def _overrides(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = dict(args.overrides)
    if args.threads is not None:
        overrides["run.threads"] = args.threads
    if args.fail_fast:
        overrides["run.fail_fast"] = True
    return overrides


def _configure_logging(args: argparse.Namespace, overrides: dict[str, Any]) -> None:
    level = args.log_level
    if level is None:
        try:
            level = load_config(args.config, overrides).logging.level
        except LpsError:
            level = "WARNING"
    logging.basicConfig(level=level, format=_LOG_FORMAT, stream=sys.stderr, force=True)


def run_command(args: argparse.Namespace) -> dict[str, Any]:
    """Dispatch a parsed command line to its tool."""
    overrides = _overrides(args)
    config = str(args.config) if args.config else None
    out = str(args.out) if args.out else None
    command = args.command
    if command == "scale":
        return scale.scale_parameters(config, overrides)
    if command == "solve-asym":
        return solve.solve_asymptotic(config, overrides, out, args.x0)
    if command == "solve-full":
        return solve.solve_full(config, overrides, out, args.x0)
    if command == "scan":
        return scan.run_scan(config, overrides, out)
    if command == "series-check":
        return series.series_check(
            args.psi,
            args.phin,
            args.phip,
            order=args.order,
            config=config,
            overrides=overrides or None,
            seed=args.seed,
            tolerance=args.tolerance,
        )
    return validate.run_validation(config, overrides, out, args.only)


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the ``lps-forward`` console script."""
    args = build_parser().parse_args(argv)
    _configure_logging(args, _overrides(args))
    result = run_command(args)
    print(json.dumps(result, indent=2, default=float))
    code = exit_code(result)
    if code != EXIT_OK:
        logger.error(f"{args.command} finished with exit status {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
