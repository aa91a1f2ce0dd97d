"""Deterministic single-cell simulator for intent-aware radio resource
scheduling, with PNG-level media transport and image-fidelity scoring."""

from .config import ScenarioConfig, load_config
from .engine import run_episode, run_batch

__all__ = ["ScenarioConfig", "load_config", "run_episode", "run_batch"]
__version__ = "0.1.0"
