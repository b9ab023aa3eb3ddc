"""Decentralized risk-aware multi-robot exploration simulator."""

from .config import PRESETS, ConfigError, SimConfig, parse_config
from .engine import BatchResult, RunResult, batch, init_run, run, tick

__all__ = [
    "PRESETS",
    "ConfigError",
    "SimConfig",
    "parse_config",
    "BatchResult",
    "RunResult",
    "batch",
    "init_run",
    "run",
    "tick",
]
__version__ = "0.1.0"
