"""Degradation-aware sizing and dispatch optimization for LiFePO4 storage."""

__version__ = "0.1.0"

from .battery import (
    BatteryParams,
    DegradationParams,
    OperatingPoint,
    default_battery,
)
from .milp import Model, Solution

__all__ = [
    "BatteryParams",
    "DegradationParams",
    "OperatingPoint",
    "default_battery",
    "Model",
    "Solution",
    "__version__",
]
