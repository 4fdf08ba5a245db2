"""
LodSim Configuration
"""

import os
from pathlib import Path

# Base paths
BASE_DIR = Path(__file__).parent
RUNS_DIR = os.environ.get("LODSIM_RUNS_DIR", str(BASE_DIR / "runs"))
SCENES_DIR = os.environ.get("LODSIM_SCENES_DIR", str(BASE_DIR / "scenes"))

# Logging
LOG_LEVEL = os.environ.get("LODSIM_LOG_LEVEL", "INFO")

# Newton solver defaults (scene files may override)
# Decrement tolerance is a mass-weighted displacement, meters
NEWTON_TOL = float(os.environ.get("LODSIM_NEWTON_TOL", "1e-7"))
MAX_ITERS = int(os.environ.get("LODSIM_MAX_ITERS", "100"))
LINE_SEARCH_SHRINK = float(os.environ.get("LODSIM_LINE_SEARCH_SHRINK", "0.5"))
ARMIJO = float(os.environ.get("LODSIM_ARMIJO", "1e-4"))
MAX_LINE_SEARCH = int(os.environ.get("LODSIM_MAX_LINE_SEARCH", "60"))

# Power iterations used for the 2-norm estimate of prolongation operators
POWER_ITERS = int(os.environ.get("LODSIM_POWER_ITERS", "100"))

# Parallel direct rollouts (direct-all-levels mode only)
WORKERS = int(os.environ.get("LODSIM_WORKERS", "1"))

# Write a boundary OBJ next to every frame dump
EXPORT_OBJ = os.environ.get("LODSIM_EXPORT_OBJ", "1") not in ("0", "false", "no")

# Default Phong blend and Poisson ratio when a scene leaves them out
PHONG_BLEND = float(os.environ.get("LODSIM_PHONG_BLEND", "0.5"))
DEFAULT_POISSON = float(os.environ.get("LODSIM_DEFAULT_POISSON", "0.4"))


# Create settings object for easy import
class Settings:
    runs_dir = RUNS_DIR
    scenes_dir = SCENES_DIR
    log_level = LOG_LEVEL
    newton_tol = NEWTON_TOL
    max_iters = MAX_ITERS
    line_search_shrink = LINE_SEARCH_SHRINK
    armijo = ARMIJO
    max_line_search = MAX_LINE_SEARCH
    power_iters = POWER_ITERS
    workers = WORKERS
    export_obj = EXPORT_OBJ
    phong_blend = PHONG_BLEND
    default_poisson = DEFAULT_POISSON


settings = Settings()
