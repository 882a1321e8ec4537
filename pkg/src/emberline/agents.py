"""Policies for the suppression environment and a small REINFORCE trainer.

A policy is any callable ``policy(state, obs, key) -> Action``.  ``key`` is an
:class:`~emberline.engine.RngKey` unique to the (episode, step) so stochastic
policies stay reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import env as E
from .engine import RngKey
from .env import ACTIONS, N_ACTIONS, Action, EnvConfig, EnvState, Move, Valve
from .grid import BURNING

_POLICY_TAG = 2


def heuristic_policy(state: EnvState, obs=None, key=None) -> Action:
    """Head for the nearest burning cell and douse it.

    Uses the full fire layer (privileged information the learned policy does
    not get).  Distance is Manhattan; ties go to the lowest row-major index.
    Horizontal moves are preferred while the column gap is at least the row gap.
    """
    rows, cols = np.nonzero(state.fire == BURNING)
    if rows.size == 0:
        return Action(Move.STAY, Valve.CLOSED)
    r, c = state.agent
    dist = np.abs(rows - r) + np.abs(cols - c)
    k = int(np.argmin(dist))
    dr, dc = int(rows[k]) - r, int(cols[k]) - c
    if dr == 0 and dc == 0:
        return Action(Move.STAY, Valve.OPEN if state.water > 0 else Valve.CLOSED)
    if dc != 0 and abs(dc) >= abs(dr):
        return Action(Move.EAST if dc > 0 else Move.WEST, Valve.CLOSED)
    return Action(Move.NORTH if dr > 0 else Move.SOUTH, Valve.CLOSED)


def random_policy(key: RngKey, obs=None, _key=None) -> Action:
    """Uniform over the 10 actions, deterministic in ``key``.

    Accepts the policy-call signature too: ``random_policy(state, obs, key)``.
    """
    if not isinstance(key, RngKey):
        key = _key
    return ACTIONS[int(key.generator(_POLICY_TAG).integers(N_ACTIONS))]


def closed_valve_policy(state: EnvState, obs=None, key=None) -> Action:
    return Action(Move.STAY, Valve.CLOSED)


# -- learned policy --------------------------------------------------------------


@dataclass
class LinearSoftmaxPolicy:
    """Softmax over actions of a linear function of the observation features."""

    weights: np.ndarray
    greedy: bool = False

    @classmethod
    def zeros(cls, cfg: EnvConfig) -> LinearSoftmaxPolicy:
        n_features = (2 * cfg.radius + 1) ** 2 * 2 + 3 + 1
        return cls(np.zeros((n_features, N_ACTIONS)))

    @staticmethod
    def featurize(obs: E.Observation) -> np.ndarray:
        """Burning and burned channels of the window, the scalars, and a bias.

        The unburned channel is dropped: it is on for nearly every in-bounds
        cell and would act as dozens of copies of the bias term.
        """
        return np.concatenate([obs.window[..., 1:].ravel(), obs.scalars, [1.0]])

    def probs(self, x: np.ndarray) -> np.ndarray:
        logits = x @ self.weights
        logits = logits - logits.max()
        e = np.exp(logits)
        return e / e.sum()

    def sample(self, x: np.ndarray, rng: np.random.Generator) -> int:
        p = self.probs(x)
        if self.greedy:
            return int(np.argmax(p))
        return int(min(np.searchsorted(np.cumsum(p), rng.random(), side="right"), N_ACTIONS - 1))

    def __call__(self, state, obs, key: RngKey) -> Action:
        return ACTIONS[self.sample(self.featurize(obs), key.generator(_POLICY_TAG))]


# -- rollouts --------------------------------------------------------------------


@dataclass
class Episode:
    total_return: float
    success: bool
    steps: int
    trace: list = field(default_factory=list)


def episode_key(key: RngKey, i: int) -> RngKey:
    """Key for episode ``i`` of a run: stream ``key.stream + i``, counters from 0."""
    return RngKey(key.seed, 0, key.stream + i)


def play_episode(cfg: EnvConfig, policy, key: RngKey, record: bool = False) -> Episode:
    """Run one episode; ``trace`` holds ``(state, action, reward)`` tuples when recording."""
    state, obs = E.reset(cfg, key)
    total, success, trace = 0.0, False, []
    if record:
        trace.append((state, None, 0.0))
    while not state.done:
        action = policy(state, obs, key.at_step(state.step))
        state, obs, reward, done = E.step(state, action, cfg)
        total += reward
        if record:
            trace.append((state, action, reward))
        success = success or E.extinguished(state)
    return Episode(total, success, state.step, trace)


@dataclass(frozen=True)
class EpisodeStats:
    mean: float
    std: float
    success_rate: float
    returns: tuple[float, ...]


def run_batch_episodes(cfg: EnvConfig, policy, n: int, key: RngKey) -> EpisodeStats:
    """``n`` independent episodes on streams ``key.stream .. key.stream + n - 1``."""
    if n < 1:
        raise ValueError("need at least one episode")
    episodes = [play_episode(cfg, policy, episode_key(key, i)) for i in range(n)]
    returns = np.array([ep.total_return for ep in episodes])
    return EpisodeStats(float(returns.mean()), float(returns.std()),
                        sum(ep.success for ep in episodes) / n, tuple(returns.tolist()))


# -- REINFORCE -------------------------------------------------------------------


class TrainingError(RuntimeError):
    pass


def train_reinforce(cfg: EnvConfig, policy: LinearSoftmaxPolicy | None = None, *, episodes: int = 4000,
                    lr: float = 4.0, discount: float = 0.5, seed: int = 0, batch_size: int = 16):
    """Monte Carlo policy gradient on batches of episodes.

    Each update uses ``batch_size`` episodes.  The baseline for a step is the
    mean return-to-go of all batch steps taken at the same time index; the
    resulting advantages are scaled to unit variance.

    A short discount works best here: dousing a cell pays off on the same
    step, and long returns mostly add noise from the fire's own randomness.

    Returns ``(policy, history)`` where ``history[i]`` is the undiscounted
    return of training episode ``i``.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    policy = policy if policy is not None else LinearSoftmaxPolicy.zeros(cfg)
    policy = LinearSoftmaxPolicy(policy.weights.copy(), greedy=False)
    base_key = RngKey(seed, 0, 0)
    history: list[float] = []
    for start in range(0, episodes, batch_size):
        feats, acts, rtg, times = [], [], [], []
        for ep in range(start, min(start + batch_size, episodes)):
            key = episode_key(base_key, ep)
            state, obs = E.reset(cfg, key)
            rewards = []
            while not state.done:
                x = policy.featurize(obs)
                a = policy.sample(x, key.at_step(state.step).generator(_POLICY_TAG))
                times.append(state.step)
                state, obs, reward, _ = E.step(state, ACTIONS[a], cfg)
                feats.append(x)
                acts.append(a)
                rewards.append(reward)
            g, returns = 0.0, []
            for r in reversed(rewards):
                g = r + discount * g
                returns.append(g)
            rtg.extend(reversed(returns))
            history.append(float(sum(rewards)))
        adv = _advantages(np.asarray(rtg), np.asarray(times))
        x = np.array(feats)
        logits = x @ policy.weights
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        dlogits = -p / p.sum(axis=1, keepdims=True)
        dlogits[np.arange(len(acts)), acts] += 1.0
        with np.errstate(invalid="ignore", over="ignore"):
            policy.weights += lr * (x.T @ (dlogits * adv[:, None])) / len(acts)
        if not np.all(np.isfinite(policy.weights)):
            raise TrainingError(f"non-finite policy parameters after episode {len(history) - 1}")
    return policy, history


def _advantages(rtg: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Return-to-go minus the batch mean at the same time step, then scaled to unit variance."""
    sums = np.bincount(times, weights=rtg)
    counts = np.bincount(times)
    adv = rtg - (sums / np.maximum(counts, 1))[times]
    return adv / (adv.std() + 1e-8)


def smoothed(history, window: int = 100) -> np.ndarray:
    """Trailing moving average (shorter windows at the start)."""
    h = np.asarray(history, dtype=float)
    if h.size == 0:
        return h
    c = np.cumsum(np.insert(h, 0, 0.0))
    idx = np.arange(1, h.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def learning_progress(history, window: int = 100, fraction: float = 0.1) -> tuple[float, float]:
    """Mean smoothed return over the first and last ``fraction`` of training."""
    s = smoothed(history, window)
    k = max(1, int(math.floor(fraction * s.size)))
    return float(s[:k].mean()), float(s[-k:].mean())
