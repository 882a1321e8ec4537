"""Time stepping: stochastic CA updates, raw-probability updates, batching.

Randomness comes from numpy's Philox counter-based generator.  The 128-bit key
is ``(seed, stream)`` and the step number occupies the third 64-bit counter
word, so the uniform used by cell ``i`` (row-major) at a given step is a pure
function of ``(seed, step, stream, i)`` no matter how many cells, batch
members or threads are involved.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .grid import BURNED, BURNING, UNBURNED, GridState, SimConfig, WindField
from .kernel import ignition_field, potential_field, susceptibility_field

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngKey:
    seed: int
    step: int = 0
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "step", "stream"):
            object.__setattr__(self, name, int(getattr(self, name)) & _MASK64)

    def at_step(self, step: int) -> RngKey:
        return replace(self, step=step)

    def next(self) -> RngKey:
        return replace(self, step=self.step + 1)

    def with_stream(self, stream: int) -> RngKey:
        return replace(self, stream=stream)

    def uniforms(self, shape) -> np.ndarray:
        """Uniform [0, 1) draws for ``prod(shape)`` cells, row-major."""
        bitgen = np.random.Philox(key=[self.seed, self.stream], counter=[0, 0, self.step, 0])
        return np.random.Generator(bitgen).random(shape)

    def generator(self, tag: int = 0) -> np.random.Generator:
        """Independent generator for non-cell draws (resets, policies)."""
        return np.random.default_rng([self.seed, self.step, self.stream, tag])


@dataclass(frozen=True, eq=False)
class ContinuousState:
    """Per-cell probabilities of being unburned, burning and burned-out.

    Arrays may carry leading batch axes and may be dual-valued.
    """

    p_un: np.ndarray
    p_burn: np.ndarray
    p_bd: np.ndarray

    @classmethod
    def from_fire(cls, fire) -> ContinuousState:
        fire = np.asarray(fire)
        return cls((fire == UNBURNED).astype(float), (fire == BURNING).astype(float),
                   (fire == BURNED).astype(float))

    @property
    def shape(self):
        return np.shape(self.p_un)

    def total(self):
        return self.p_un + self.p_burn + self.p_bd

    def validate(self, atol: float = 1e-12) -> None:
        parts = [np.asarray(getattr(p, "value", p)) for p in (self.p_un, self.p_burn, self.p_bd)]
        if any(np.any(p < -atol) for p in parts):
            raise ValueError("state probabilities must be nonnegative")
        if not np.all(np.abs(parts[0] + parts[1] + parts[2] - 1.0) <= atol):
            raise ValueError("state probabilities must sum to 1 per cell")


# -- single steps --------------------------------------------------------------


def _advance_fire(fire, p_ignite, p_continue, u):
    nxt = fire.copy()
    nxt[(fire == UNBURNED) & (u < p_ignite)] = BURNING
    nxt[(fire == BURNING) & (u >= p_continue)] = BURNED
    return nxt


def stochastic_update(fire, phi, gamma, cfg, keys):
    """Bernoulli step given precomputed potentials ``phi`` and susceptibility ``gamma``.

    ``keys`` is one RngKey for a single layer or a sequence for a batch.
    """
    fire = np.asarray(fire, dtype=np.int8)
    p_ignite = ignition_field((fire == BURNING).astype(np.float64), phi, gamma)
    if fire.ndim == 2:
        u = keys.uniforms(fire.shape)
    else:
        u = np.stack([k.uniforms(fire.shape[-2:]) for k in keys])
    return _advance_fire(fire, p_ignite, float(cfg.p_continue), u)


def deterministic_update(state, phi, gamma, cfg):
    """Raw-probability step given precomputed ``phi`` and ``gamma``."""
    p_ignite = ignition_field(state.p_burn, phi, gamma)
    newly_burning = state.p_un * p_ignite
    continuing = state.p_burn * cfg.p_continue
    burned_now = state.p_burn * (1.0 - cfg.p_continue)
    return ContinuousState(state.p_un - newly_burning, newly_burning + continuing, state.p_bd + burned_now)


def step_stochastic(fire, grid: GridState, cfg: SimConfig, key: RngKey) -> np.ndarray:
    """One synchronous Bernoulli update of a discrete fire layer."""
    return stochastic_update(fire, potential_field(grid, cfg), susceptibility_field(grid, cfg), cfg, key)


def step_deterministic(state: ContinuousState, grid: GridState, cfg: SimConfig) -> ContinuousState:
    """One raw-probability update; burning weights are the marginal ``p_burn``."""
    return deterministic_update(state, potential_field(grid, cfg), susceptibility_field(grid, cfg), cfg)


# -- rollouts ------------------------------------------------------------------


class _SpreadCache:
    """Potentials for the current wind; recomputed only when the wind changes."""

    def __init__(self, grid, cfg, schedule):
        self.grid, self.cfg, self.schedule = grid, cfg, schedule
        self.gamma = susceptibility_field(grid, cfg)
        self._wind = None
        self._phi = None

    def wind_at(self, t: int) -> WindField:
        if not self.schedule:
            return self.grid.wind
        return self.schedule[min(t, len(self.schedule) - 1)]

    def phi(self, t: int):
        wind = self.wind_at(t)
        if wind is not self._wind:
            self._wind = wind
            self._phi = potential_field(self.grid, self.cfg, wind)
        return self._phi


def run(initial, grid: GridState, cfg: SimConfig, key: RngKey | Sequence[RngKey] | None = None,
        steps: int = 0, record: bool = False, wind_schedule: Sequence[WindField] | None = None):
    """Advance ``initial`` by ``steps`` steps.

    ``initial`` is either a discrete fire layer (stochastic mode, ``key``
    required; the key's ``step`` field is the first step number used) or a
    :class:`ContinuousState` (deterministic mode).  A leading batch axis on the
    fire layer is allowed when ``key`` is a sequence of keys, one per member.

    ``wind_schedule[t]`` is the wind used for step ``t``; the last entry holds
    once the schedule runs out.

    Returns ``(final, trajectory)`` where ``trajectory`` lists ``steps + 1``
    states when ``record`` is set and is ``None`` otherwise.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    cache = _SpreadCache(grid, cfg, list(wind_schedule or ()))
    deterministic = isinstance(initial, ContinuousState)
    if not deterministic:
        if key is None:
            raise ValueError("stochastic rollouts need an RngKey")
        state = np.asarray(initial, dtype=np.int8).copy()
    else:
        state = initial
    trajectory = [state] if record else None
    for t in range(steps):
        if deterministic:
            state = deterministic_update(state, cache.phi(t), cache.gamma, cfg)
        else:
            keys = key.at_step(key.step + t) if isinstance(key, RngKey) else [k.at_step(k.step + t) for k in key]
            state = stochastic_update(state, cache.phi(t), cache.gamma, cfg, keys)
        if record:
            trajectory.append(state)
    return state, trajectory


# -- batches -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BatchState:
    """``N`` independent simulations advanced in lockstep.

    ``states`` is an ``(N, H, W)`` fire array (stochastic) or a
    :class:`ContinuousState` whose arrays are ``(N, H, W)`` (deterministic).
    Member ``k`` draws from ``RngKey(seed, step, streams[k])``.
    """

    states: object
    seed: int = 0
    step: int = 0
    streams: tuple[int, ...] = field(default=())

    def __post_init__(self):
        n = len(self)
        if not self.streams:
            object.__setattr__(self, "streams", tuple(range(n)))
        elif len(self.streams) != n:
            raise ValueError(f"{len(self.streams)} streams for {n} batch members")

    @classmethod
    def stochastic(cls, fires, seed: int = 0, streams=(), step: int = 0) -> BatchState:
        return cls(np.stack([np.asarray(f, dtype=np.int8) for f in fires]), seed, step, tuple(streams))

    @classmethod
    def deterministic(cls, states: Sequence[ContinuousState]) -> BatchState:
        return cls(ContinuousState(*(np.stack([getattr(s, name) for s in states])
                                     for name in ("p_un", "p_burn", "p_bd"))))

    @property
    def is_deterministic(self) -> bool:
        return isinstance(self.states, ContinuousState)

    def __len__(self) -> int:
        return self.states.shape[0]

    def keys(self) -> list[RngKey]:
        return [RngKey(self.seed, self.step, s) for s in self.streams]

    def member(self, k: int):
        if self.is_deterministic:
            return ContinuousState(self.states.p_un[k], self.states.p_burn[k], self.states.p_bd[k])
        return self.states[k]


def step_batch(batch: BatchState, grid: GridState, cfg: SimConfig) -> BatchState:
    """Step every member once; each member matches a solo step on its own stream."""
    phi, gamma = potential_field(grid, cfg), susceptibility_field(grid, cfg)
    if batch.is_deterministic:
        nxt = deterministic_update(batch.states, phi, gamma, cfg)
    else:
        nxt = stochastic_update(batch.states, phi, gamma, cfg, batch.keys())
    return replace(batch, states=nxt, step=batch.step + 1)


def run_batch(batch: BatchState, grid: GridState, cfg: SimConfig, steps: int,
              wind_schedule: Sequence[WindField] | None = None) -> BatchState:
    """``steps`` lockstep updates without recording history."""
    if batch.is_deterministic:
        final, _ = run(batch.states, grid, cfg, steps=steps, wind_schedule=wind_schedule)
    else:
        final, _ = run(batch.states, grid, cfg, key=batch.keys(), steps=steps, wind_schedule=wind_schedule)
    return replace(batch, states=final, step=batch.step + steps)


def fire_fraction_stats(state) -> tuple[float, float, float]:
    """Fractions of cells (or mean probabilities) unburned, burning, burned."""
    if isinstance(state, ContinuousState):
        return tuple(float(np.mean(np.asarray(getattr(p, "value", p))))
                     for p in (state.p_un, state.p_burn, state.p_bd))
    fire = np.asarray(state)
    n = fire.size
    return tuple(float(np.count_nonzero(fire == s)) / n for s in (UNBURNED, BURNING, BURNED))
