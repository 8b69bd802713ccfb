"""Shared helpers: structured log lines, number formatting and atomic writes."""

import os
import platform
import tempfile
from pathlib import Path
from typing import Any

from .errors import LpsError
from .models import ErrorType, ToolResult

SIGNIFICANT_DIGITS = 17


def format_kv(event: str, **fields: Any) -> str:
    """Build a single-line key-value log record.

    Floats are rendered in ``%.6e``; everything else with ``str``.

    Args:
        event: Dotted event name, e.g. ``newton.converged``
        **fields: Key-value pairs appended in the given order

    Returns:
        The formatted record

    Example:
        >>> format_kv("newton.converged", stage="psi0", iterations=3, residual=1.5e-12)
        'newton.converged stage=psi0 iterations=3 residual=1.500000e-12'
    """
    parts = [event]
    for key, value in fields.items():
        if isinstance(value, float):
            parts.append(f"{key}={value:.6e}")
        else:
            parts.append(f"{key}={value}")
    return " ".join(parts)


def format_number(value: float) -> str:
    """Format a float in scientific notation with 17 significant digits."""
    return f"{value:.{SIGNIFICANT_DIGITS - 1}e}"


def atomic_file_replace(source: Path, target: Path) -> None:
    """Atomically replace a file using rename.

    On Windows the target has to be removed first, which is not atomic.

    Args:
        source: Path to the source file (must exist)
        target: Path to the target file (will be replaced)

    Raises:
        OSError: If the rename fails
    """
    if platform.system() == "Windows" and target.exists():
        target.unlink()
    os.replace(source, target)


def atomic_write_text(target: Path, text: str) -> None:
    """Write text to ``target`` through a temporary file in the same directory.

    Readers never observe a partially written CSV or field dump.

    Args:
        target: Destination path; parent directories are created
        text: Full file content

    Raises:
        LpsError: With ``io_error`` when the directory or file cannot be written
    """
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
        tmp_path = Path(tmp_name)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
                handle.write(text)
            atomic_file_replace(tmp_path, target)
        except BaseException:
            tmp_path.unlink(missing_ok=True)
            raise
    except OSError as e:
        raise LpsError(f"Cannot write {target}: {e}", ErrorType.IO_ERROR) from e


def error_result(exc: Exception, **extra: Any) -> dict[str, Any]:
    """Convert an exception into the failure dictionary of the tool layer.

    Args:
        exc: The caught exception
        **extra: Additional keys copied into the result

    Returns:
        ``{"success": False, "message": ..., "error": ..., "error_type": ..., **extra}``
    """
    error_type = exc.error_type if isinstance(exc, LpsError) else ErrorType.INVALID_INPUT
    result = ToolResult(
        success=False,
        message=f"{error_type.value}: {exc}",
        error=str(exc),
        error_type=error_type,
    )
    return {**result.model_dump(mode="json", exclude_none=True), **extra}
