# src/config.py
"""
Configuration for the grouped latent multi-task trainer.

Loads run-level settings from environment variables (optionally from a `.env`
file at the project root). CLI flags override every value here.

Usage:
    from src.config import CONFIG
"""

import os
from dataclasses import dataclass
from pathlib import Path

from dotenv import load_dotenv

project_root = Path(__file__).resolve().parents[1]
dotenv_path = project_root / ".env"
if dotenv_path.exists():
    load_dotenv(dotenv_path)


@dataclass(frozen=True)
class AppConfig:
    SEED: int
    THREADS: int
    LOG_LEVEL: str
    LAMBDA: float
    OUTER_MAX: int
    INNER_MAX: int


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "")
    try:
        return int(raw) if raw else default
    except ValueError:
        return default


def _env_float(name: str, default: float) -> float:
    raw = os.getenv(name, "")
    try:
        return float(raw) if raw else default
    except ValueError:
        return default


def load_config() -> AppConfig:
    """
    Loads config from environment variables.

    Expected environment variables (all optional):
        MTL_SEED        - seed for every random draw (default 42)
        MTL_THREADS     - worker threads for cross-validation folds (default 1)
        MTL_LOG_LEVEL   - DEBUG / INFO / WARNING (default INFO)
        MTL_LAMBDA      - Frobenius weight on L (default 0.4)
        MTL_OUTER_MAX   - alternating iterations cap (default 50)
        MTL_INNER_MAX   - per-subproblem iteration cap (default 500)
    """
    return AppConfig(
        SEED=_env_int("MTL_SEED", 42),
        THREADS=max(1, _env_int("MTL_THREADS", 1)),
        LOG_LEVEL=os.getenv("MTL_LOG_LEVEL", "INFO").upper(),
        LAMBDA=_env_float("MTL_LAMBDA", 0.4),
        OUTER_MAX=_env_int("MTL_OUTER_MAX", 50),
        INNER_MAX=_env_int("MTL_INNER_MAX", 500),
    )


# Make config available at import
CONFIG = load_config()
