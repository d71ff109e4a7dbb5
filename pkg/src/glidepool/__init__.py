"""Discrete-event simulator of pilot-based provisioning with classad-style matchmaking."""

from .engine import Metrics, ScenarioConfig, load_config, run

__version__ = "0.1.0"

__all__ = ["Metrics", "ScenarioConfig", "load_config", "run", "__version__"]
