# SPDX-License-Identifier: MIT
"""Runtime configuration loaded from environment variables, plus run profiles."""
import os
from typing import Any, Dict


class Config:
    """Runtime configuration."""

    # Application
    CAWR_ENV: str = os.getenv("CAWR_ENV", "development")
    LOG_LEVEL: str = os.getenv("CAWR_LOG_LEVEL", "INFO").upper()

    # Runs
    RUNS_DIR: str = os.getenv("CAWR_RUNS_DIR", "runs")
    PROFILE: str = os.getenv("CAWR_PROFILE", "desk")
    WORKERS: int = int(os.getenv("CAWR_WORKERS", "1"))

    @classmethod
    def validate(cls):
        """Validate configuration values."""
        if cls.LOG_LEVEL not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"CAWR_LOG_LEVEL must be a logging level name, got {cls.LOG_LEVEL!r}")
        if cls.PROFILE not in PROFILES:
            raise ValueError(f"CAWR_PROFILE must be one of {sorted(PROFILES)}, got {cls.PROFILE!r}")
        if cls.WORKERS < 1:
            raise ValueError("CAWR_WORKERS must be at least 1")


# Overlays applied on top of an experiment config by --profile.
PROFILES: Dict[str, Dict[str, Any]] = {
    "desk": {
        "iterations": 20000,
        "eval_every": 500,
        "eval_episodes": 10,
        "seeds": [0, 1, 2],
    },
    "full": {
        "iterations": 400000,
        "eval_every": 10000,
        "eval_episodes": 10,
        "seeds": [0, 1, 2],
    },
}


Config.validate()

config = Config()
