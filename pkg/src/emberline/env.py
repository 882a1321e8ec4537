"""Fire-suppression environment: an air tanker drops water on a spreading fire.

Per step the effects happen in a fixed order: the agent moves (clamped to the
grid), water is dropped on the agent's cell if the valve is open, then the
fire advances one stochastic step.  The reward is ``-burn_penalty`` per cell
still burning, plus ``terminal_bonus`` once nothing is burning (provided some
cell ever caught fire).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .engine import RngKey, stochastic_update
from .grid import BURNED, BURNING, UNBURNED, CellIndex, SimConfig, uniform_grid
from .kernel import potential_field, susceptibility_field


class Move(IntEnum):
    NORTH = 0
    SOUTH = 1
    EAST = 2
    WEST = 3
    STAY = 4


class Valve(IntEnum):
    CLOSED = 0
    OPEN = 1


_MOVE_DELTA = {Move.NORTH: (1, 0), Move.SOUTH: (-1, 0), Move.EAST: (0, 1), Move.WEST: (0, -1), Move.STAY: (0, 0)}


class Action(NamedTuple):
    move: Move
    valve: Valve

    @property
    def index(self) -> int:
        return int(self.move) * len(Valve) + int(self.valve)

    @classmethod
    def from_index(cls, i: int) -> Action:
        return ACTIONS[i]


ACTIONS: tuple[Action, ...] = tuple(Action(m, v) for m in Move for v in Valve)
N_ACTIONS = len(ACTIONS)

# Slow, winded spread that a single tanker can usually contain.
SUPPRESSION_PRESET = SimConfig(p_base=0.03, alpha_w1=0.1, alpha_w2=0.4, alpha_s=0.5,
                               alpha_gamma=1.0, p_continue=0.97, max_steps=200)


@dataclass(frozen=True)
class EnvConfig:
    dims: tuple[int, int] = (20, 20)
    radius: int = 2
    water: int = 30
    burn_penalty: float = 0.05
    terminal_bonus: float = 10.0
    max_steps: int = 200
    wind_speed: float = 1.0
    wind_direction: float = 0.0
    sim: SimConfig = SUPPRESSION_PRESET
    ignitions: int = 1
    waste_water: bool = True

    def __post_init__(self):
        h, w = self.dims
        if h < 1 or w < 1:
            raise ValueError("dims must be positive")
        if self.radius < 0:
            raise ValueError("observation radius must be nonnegative")
        if self.water < 1:
            raise ValueError("water capacity must be at least 1")
        if not self.burn_penalty > 0:
            raise ValueError("burn penalty must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if not 0 <= self.ignitions <= h * w:
            raise ValueError("ignitions must fit on the grid")

    def replace(self, **changes) -> EnvConfig:
        return dataclasses.replace(self, **changes)

    @cached_property
    def grid(self):
        return uniform_grid(self.dims, wind_speed=self.wind_speed, wind_direction=self.wind_direction)

    @cached_property
    def spread_terms(self):
        return potential_field(self.grid, self.sim), susceptibility_field(self.grid, self.sim)


# Small slow-spread task used to check that a learner makes progress quickly.
# Burning cells usually outlast the episode, so the bonus is mostly earned by the agent.
SMOKE_CONFIG = EnvConfig(dims=(10, 10), radius=2, water=20, max_steps=60, wind_speed=0.0,
                         sim=SimConfig(p_base=0.01, alpha_w1=0.1, alpha_w2=0.4, alpha_s=0.5,
                                       alpha_gamma=1.0, p_continue=0.99, max_steps=60))


@dataclass(frozen=True, eq=False)
class EnvState:
    fire: np.ndarray
    agent: CellIndex
    water: int
    step: int
    key: RngKey
    done: bool = False

    @property
    def burning(self) -> int:
        return int(np.count_nonzero(self.fire == BURNING))


@dataclass(frozen=True, eq=False)
class Observation:
    """Egocentric one-hot window ``(2r+1, 2r+1, 3)`` plus three normalized scalars.

    Window axis 0 follows model rows (northward), axis 1 columns (eastward);
    cells beyond the grid edge are all-zero.  ``scalars`` holds the remaining
    water fraction and the agent's row and column scaled to [0, 1].
    """

    window: np.ndarray
    scalars: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def features(self) -> np.ndarray:
        return np.concatenate([self.window.ravel(), self.scalars])


def extinguished(state: EnvState) -> bool:
    """True once nothing burns and at least one cell has burned (the bonus condition)."""
    fire = state.fire
    return not np.any(fire == BURNING) and bool(np.any(fire != UNBURNED))


class EpisodeDone(RuntimeError):
    pass


def observe(state: EnvState, cfg: EnvConfig) -> Observation:
    r = cfg.radius
    h, w = cfg.dims
    padded = np.full((h + 2 * r, w + 2 * r), -1, dtype=np.int8)
    padded[r:r + h, r:r + w] = state.fire
    row, col = state.agent
    patch = padded[row:row + 2 * r + 1, col:col + 2 * r + 1]
    window = np.stack([patch == UNBURNED, patch == BURNING, patch == BURNED], axis=-1).astype(np.float64)
    scalars = np.array([state.water / cfg.water, row / max(h - 1, 1), col / max(w - 1, 1)])
    return Observation(window, scalars)


def reset(cfg: EnvConfig, key: RngKey) -> tuple[EnvState, Observation]:
    """Fresh episode: random ignition cell(s), random agent cell, full water."""
    rng = key.generator(tag=1)
    h, w = cfg.dims
    fire = np.zeros(cfg.dims, dtype=np.int8)
    cells = rng.choice(h * w, size=cfg.ignitions, replace=False)
    fire.flat[cells] = BURNING
    start = int(rng.integers(h * w))
    state = EnvState(fire, CellIndex(start // w, start % w), cfg.water, 0, key)
    return state, observe(state, cfg)


def step(state: EnvState, action: Action, cfg: EnvConfig) -> tuple[EnvState, Observation, float, bool]:
    if state.done:
        raise EpisodeDone("episode already finished; call reset()")
    if not isinstance(action, Action):
        action = ACTIONS[int(action)]
    h, w = cfg.dims
    dr, dc = _MOVE_DELTA[action.move]
    agent = CellIndex(min(max(state.agent.row + dr, 0), h - 1), min(max(state.agent.col + dc, 0), w - 1))

    fire = state.fire
    water = state.water
    if action.valve == Valve.OPEN and water > 0:
        on_fire = fire[agent] == BURNING
        if on_fire or cfg.waste_water:
            water -= 1
        if on_fire:
            fire = fire.copy()
            fire[agent] = BURNED

    phi, gamma = cfg.spread_terms
    fire = stochastic_update(fire, phi, gamma, cfg.sim, state.key.at_step(state.key.step + state.step))
    burning = int(np.count_nonzero(fire == BURNING))
    n = state.step + 1
    nxt = EnvState(fire, agent, water, n, state.key, burning == 0 or n >= cfg.max_steps)
    reward = -cfg.burn_penalty * burning
    if extinguished(nxt):
        reward += cfg.terminal_bonus
    return nxt, observe(nxt, cfg), reward, nxt.done
