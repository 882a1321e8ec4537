"""Simulation state layers and neighbor geometry.

Model-space axis convention: column index grows eastward (+x) and row index
grows northward (+y).  Raster files store the northern row first, so readers
flip rows on the way in (see :mod:`emberline.geodata`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .autodiff import value_of

UNBURNED, BURNING, BURNED = 0, 1, 2


class FireState(IntEnum):
    UNBURNED = UNBURNED
    BURNING = BURNING
    BURNED = BURNED


class CellIndex(NamedTuple):
    row: int
    col: int


class NeighborOffset(NamedTuple):
    dx: int
    dy: int

    @property
    def angle(self) -> float:
        return offset_angle(self)

    @property
    def length(self) -> float:
        return math.hypot(self.dx, self.dy)

    def __neg__(self) -> NeighborOffset:
        return NeighborOffset(-self.dx, -self.dy)


# Counter-clockwise from east; this order indexes axis 0 of every slope field.
OFFSETS: tuple[NeighborOffset, ...] = (
    NeighborOffset(1, 0),
    NeighborOffset(1, 1),
    NeighborOffset(0, 1),
    NeighborOffset(-1, 1),
    NeighborOffset(-1, 0),
    NeighborOffset(-1, -1),
    NeighborOffset(0, -1),
    NeighborOffset(1, -1),
)
OFFSET_INDEX = {d: k for k, d in enumerate(OFFSETS)}
OPPOSITE = tuple(OFFSET_INDEX[-d] for d in OFFSETS)


def offset_angle(d: NeighborOffset) -> float:
    """Angle of ``d`` in radians, east = 0, counter-clockwise, in [0, 2*pi)."""
    dx, dy = d
    if (dx, dy) == (0, 0) or abs(dx) > 1 or abs(dy) > 1:
        raise ValueError(f"not a neighbor offset: {d!r}")
    return math.atan2(dy, dx) % (2.0 * math.pi)


OFFSET_ANGLES = np.array([offset_angle(d) for d in OFFSETS])


class GridError(ValueError):
    """Raised when grid layers are malformed or out of range."""


def _as_layer(name, values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    if arr.ndim != 2:
        raise GridError(f"{name} must be a 2-D layer, got shape {arr.shape}")
    if arr.dtype.kind == "f" and not np.all(np.isfinite(arr)):
        raise GridError(f"{name} contains NaN or infinite values")
    return arr


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.flags.writeable = False


@dataclass(frozen=True, eq=False)
class WindField:
    """Per-cell wind speed (>= 0) and direction (radians from east, CCW)."""

    speed: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        speed = _as_layer("wind speed", self.speed)
        direction = _as_layer("wind direction", self.direction)
        if speed.shape != direction.shape:
            raise GridError(f"wind speed {speed.shape} and direction {direction.shape} differ in shape")
        if np.any(speed < 0):
            raise GridError("wind speed must be nonnegative")
        direction = np.mod(direction, 2.0 * np.pi)
        # mod can round a tiny negative up to exactly 2*pi
        direction[direction >= 2.0 * np.pi] = 0.0
        _freeze(speed, direction)
        object.__setattr__(self, "speed", speed)
        object.__setattr__(self, "direction", direction)

    @classmethod
    def uniform(cls, dims: tuple[int, int], speed: float = 0.0, direction: float = 0.0) -> WindField:
        return cls(np.full(dims, float(speed)), np.full(dims, float(direction)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.speed.shape


@dataclass(frozen=True, eq=False)
class FuelField:
    """Canopy (``veg``) and ground-fuel density (``den``) modifiers, clamped to [-1, 1]."""

    veg: np.ndarray
    den: np.ndarray

    def __post_init__(self):
        veg = np.clip(_as_layer("vegetation modifier", self.veg), -1.0, 1.0)
        den = np.clip(_as_layer("density modifier", self.den), -1.0, 1.0)
        if veg.shape != den.shape:
            raise GridError(f"fuel layers differ in shape: {veg.shape} vs {den.shape}")
        _freeze(veg, den)
        object.__setattr__(self, "veg", veg)
        object.__setattr__(self, "den", den)

    @classmethod
    def uniform(cls, dims: tuple[int, int], veg: float = 0.0, den: float = 0.0) -> FuelField:
        return cls(np.full(dims, float(veg)), np.full(dims, float(den)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.veg.shape


def flat_slope(dims: tuple[int, int]) -> np.ndarray:
    return np.zeros((len(OFFSETS),) + tuple(dims))


@dataclass(frozen=True, eq=False)
class GridState:
    """Immutable bundle of the fire, wind, fuel and slope layers.

    ``slope`` has shape ``(8, H, W)``; ``slope[k, r, c]`` is the inclination in
    radians from cell ``(r, c)`` toward neighbor ``OFFSETS[k]``.
    """

    fire: np.ndarray
    wind: WindField
    fuel: FuelField
    slope: np.ndarray
    dims: tuple[int, int] = field(init=False)

    def __post_init__(self):
        fire = _as_layer("fire state", self.fire, dtype=np.int8)
        if not np.all(np.isin(fire, (UNBURNED, BURNING, BURNED))):
            raise GridError("fire state values must be 0, 1 or 2")
        slope = np.array(self.slope, dtype=np.float64)
        dims = fire.shape
        if slope.shape != (len(OFFSETS),) + dims:
            raise GridError(f"slope must have shape {(len(OFFSETS),) + dims}, got {slope.shape}")
        if not np.all(np.isfinite(slope)):
            raise GridError("slope contains NaN or infinite values")
        for name, shape in (("wind", self.wind.shape), ("fuel", self.fuel.shape)):
            if shape != dims:
                raise GridError(f"{name} layer shape {shape} does not match fire layer {dims}")
        _freeze(fire, slope)
        object.__setattr__(self, "fire", fire)
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "dims", dims)

    def with_fire(self, fire) -> GridState:
        return GridState(fire, self.wind, self.fuel, self.slope)

    def with_wind(self, wind: WindField) -> GridState:
        return GridState(self.fire, wind, self.fuel, self.slope)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.dims[0] and 0 <= col < self.dims[1]

    def cell(self, row: int, col: int) -> CellIndex:
        if not self.in_bounds(row, col):
            raise IndexError(f"cell ({row}, {col}) outside grid {self.dims}")
        return CellIndex(row, col)

    def neighbors(self, u: CellIndex):
        """Yield ``(offset, neighbor)`` pairs for in-bounds neighbors of ``u``."""
        for d in OFFSETS:
            r, c = u.row + d.dy, u.col + d.dx
            if self.in_bounds(r, c):
                yield d, CellIndex(r, c)


def new_grid(dims, fire, wind: WindField, fuel: FuelField, slope) -> GridState:
    """Validate and assemble a :class:`GridState` of shape ``dims``."""
    dims = tuple(int(n) for n in dims)
    if len(dims) != 2 or min(dims) < 1:
        raise GridError(f"invalid grid dimensions {dims}")
    grid = GridState(fire, wind, fuel, slope)
    if grid.dims != dims:
        raise GridError(f"layers have shape {grid.dims}, expected {dims}")
    return grid


def uniform_grid(dims, *, veg=0.0, den=0.0, wind_speed=0.0, wind_direction=0.0, ignitions=()) -> GridState:
    """Homogeneous, flat grid; ``ignitions`` lists ``(row, col)`` cells set Burning."""
    dims = tuple(dims)
    fire = np.zeros(dims, dtype=np.int8)
    for r, c in ignitions:
        fire[r, c] = BURNING
    return new_grid(dims, fire, WindField.uniform(dims, wind_speed, wind_direction),
                    FuelField.uniform(dims, veg, den), flat_slope(dims))


@dataclass(frozen=True)
class SimConfig:
    """Spread-model parameters.

    The six calibratable parameters may hold :class:`~emberline.autodiff.DualVector`
    values when a rollout is being differentiated.
    """

    p_base: float = 0.3
    alpha_w1: float = 0.1
    alpha_w2: float = 0.2
    alpha_s: float = 0.5
    alpha_gamma: float = 1.0
    p_continue: float = 0.5
    max_steps: int = 200

    PARAMS = ("p_base", "alpha_w1", "alpha_w2", "alpha_s", "alpha_gamma", "p_continue")

    def __post_init__(self):
        for name in self.PARAMS:
            v = np.asarray(value_of(getattr(self, name)))
            if v.shape != () or not np.isfinite(v):
                raise ValueError(f"{name} must be a finite scalar")
        if not self.p_base > 0:
            raise ValueError("p_base must be strictly positive")
        if not self.alpha_gamma > 0:
            raise ValueError("alpha_gamma must be strictly positive")
        if not 0.0 <= self.p_continue <= 1.0:
            raise ValueError("p_continue must lie in [0, 1]")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise ValueError("max_steps must be a positive integer")

    def params(self) -> tuple:
        return tuple(getattr(self, n) for n in self.PARAMS)

    def with_params(self, values) -> SimConfig:
        return SimConfig(*values, max_steps=self.max_steps)
