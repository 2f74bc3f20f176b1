"""Passive walker tracking from Wi-Fi CSI and pressure insoles."""

from .errors import *  # noqa: F401,F403
from .geometry import Scene, TargetState

__version__ = "0.1.0"
