"""
config.py
Runtime settings, read once from the environment and .env via python-dotenv.
"""

import os
from dotenv import load_dotenv

load_dotenv()

# ── Runtime ──────────────────────────────────────────────────────────────────────
THREADS: int       = max(1, int(os.getenv("OFK_THREADS", "1")))
LOG_LEVEL: str     = os.getenv("OFK_LOG_LEVEL", "INFO").upper()
DEFAULT_SCALE: str = os.getenv("OFK_SCALE", "desk")
DEFAULT_SEED: int  = int(os.getenv("OFK_SEED", "0"))
DEFAULT_OUT: str   = os.getenv("OFK_OUT", "runs")

# ── Raster / render colours (RGB in [0, 1]) ──────────────────────────────────────
class Colors:
    LANE         = (0.5, 0.5, 0.5)
    ROAD_EDGE    = (1.0, 1.0, 1.0)
    CROSSWALK    = (1.0, 1.0, 0.0)
    LIGHT_RED    = (1.0, 0.0, 0.0)
    LIGHT_YELLOW = (1.0, 0.6, 0.0)
    LIGHT_GREEN  = (0.0, 1.0, 0.0)
    OBSERVED     = (1.0, 0.0, 0.0)
    OCCLUDED     = (0.0, 1.0, 0.0)

# ── Meta ─────────────────────────────────────────────────────────────────────────
PROJECT_NAME = "Occupancy Flow Kit"
VERSION      = "1.0.0"
BANNER       = f"{PROJECT_NAME} v{VERSION}"
