"""
Package version and generator identification
"""

import subprocess
from pathlib import Path

__version__ = "0.1.0"


def describe() -> str:
    """git-describe of the source tree, falling back to the package version"""
    try:
        result = subprocess.run(
            ['git', 'describe', '--always', '--dirty', '--tags'],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5
        )
    except (OSError, subprocess.SubprocessError):
        return f"fuelcell-nnmpc {__version__}"
    if result.returncode != 0 or not result.stdout.strip():
        return f"fuelcell-nnmpc {__version__}"
    return result.stdout.strip()
