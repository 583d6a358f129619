"""Numerical defaults and the output directory override

Values can be set in a `.env` file next to the repository root or in the process
environment. Only CB_OUTPUT_DIR changes where experiments write; the remaining
variables tune solver tolerances and are read once at import time.
"""
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()


def _float_env(name: str, default: float) -> float:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return float(raw)
    except ValueError:
        return default


QUAD_REL_TOL = _float_env("CB_QUAD_REL_TOL", 1e-12)
ROOT_REL_TOL = _float_env("CB_ROOT_REL_TOL", 1e-14)
ODE_TOL = _float_env("CB_ODE_TOL", 1e-10)

# u below this is treated as absorbed by the backward ODE
ABSORPTION_FLOOR = 1e-300

TALBOT_NODES = 32
EULER_NODES = 12
STEHFEST_DEGREE = 16

DEFAULT_THETA_GRID_SIZE = 25
DEFAULT_THETA_RANGE = (1e-2, 1e2)
DEFAULT_INFINITY_GRID = (1e2, 1e8)
DEFAULT_ZERO_GRID = (1e-8, 1e-2)
INDEX_DRIFT_THRESHOLD = 1e-3

ARTIFACT_VERSION = "1.0.0"


def output_dir(configured: str = None) -> Path:
    """Resolve the output directory: CB_OUTPUT_DIR wins over the configured value"""
    override = os.getenv("CB_OUTPUT_DIR")
    if override:
        return Path(override)
    return Path(configured or "results")
