"""
Settings
--------
Environment-driven settings for the p-Laplace lab. Only the log level comes
from the environment (or a local .env file); everything else about a run lives
in its experiment config.
"""

import logging
import os

from dotenv import load_dotenv

load_dotenv()

# ── Configuration ─────────────────────────────────────────────────────────────
LOG_LEVEL = os.getenv("PLAB_LOG_LEVEL", "INFO").upper()

BANNER = "=" * 70


def configure_logging(level=None):
    """Configure the root logger once; plain message format like console prints."""
    level_name = (level or LOG_LEVEL).upper()
    numeric = getattr(logging, level_name, None)
    if not isinstance(numeric, int):
        numeric = logging.INFO
    logging.basicConfig(level=numeric, format="%(message)s", force=True)
    return numeric
