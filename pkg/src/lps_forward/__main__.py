"""CLI entry point for lps-forward.

This module enables running the command line as a Python module:
    python -m lps_forward scan --config run.cfg
"""

import sys

from .cli import main

if __name__ == "__main__":
    sys.exit(main())
