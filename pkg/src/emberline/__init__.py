"""Cellular-automata wildfire spread with differentiable calibration and an RL environment."""

from .engine import BatchState, ContinuousState, RngKey, fire_fraction_stats, run, step_batch, step_deterministic, step_stochastic
from .grid import OFFSETS, CellIndex, FireState, FuelField, GridState, NeighborOffset, SimConfig, WindField, new_grid, offset_angle

__all__ = [
    "BatchState", "CellIndex", "ContinuousState", "FireState", "FuelField", "GridState", "NeighborOffset",
    "OFFSETS", "RngKey", "SimConfig", "WindField", "fire_fraction_stats", "new_grid", "offset_angle", "run",
    "step_batch", "step_deterministic", "step_stochastic",
]
__version__ = "0.1.0"
