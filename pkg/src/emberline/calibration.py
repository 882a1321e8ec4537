"""Fitting spread parameters to an observed burn mask.

The six parameters are optimized in an unconstrained space (see
:class:`ThetaTransform`) with Adam.  Gradients come from forward-mode duals
pushed through a deterministic rollout.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import N_PARAMS, lift_parameter, value_of
from .engine import ContinuousState, run
from .grid import GridState, SimConfig

log = logging.getLogger(__name__)


class CalibrationError(RuntimeError):
    """Raised when the loss or gradient becomes non-finite."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message if iteration is None else f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True, eq=False)
class CalibrationTarget:
    burn_mask: np.ndarray
    horizon: int

    def __post_init__(self):
        mask = np.asarray(self.burn_mask)
        if mask.ndim != 2:
            raise ValueError("burn mask must be 2-D")
        if not np.all(np.isin(mask, (0, 1))):
            raise ValueError("burn mask must be binary")
        if not mask.any():
            raise ValueError("burn mask has no burned cells")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        object.__setattr__(self, "burn_mask", mask.astype(np.float64))


@dataclass(frozen=True)
class LossConfig:
    bce_weight: float = 1.0
    mse_weight: float = 1.0
    pool_size: int = 4
    bce_epsilon: float = 1e-6

    def __post_init__(self):
        if self.bce_weight < 0 or self.mse_weight < 0:
            raise ValueError("loss weights must be nonnegative")
        if not (self.bce_weight > 0 or self.mse_weight > 0):
            raise ValueError("at least one loss weight must be positive")
        if int(self.pool_size) != self.pool_size or self.pool_size < 1:
            raise ValueError("pool_size must be a positive integer")
        if not 0 < self.bce_epsilon < 0.5:
            raise ValueError("bce_epsilon must lie in (0, 0.5)")


# -- positivity / unit-interval reparameterization ---------------------------

_POSITIVE = ("p_base", "alpha_gamma")
_UNIT = ("p_continue",)


def _softplus(z):
    # log(1 + e^z) = max(z, 0) + log1p(e^-|z|), written to stay dual-compatible
    if np.asarray(value_of(z)) > 0:
        return z + np.log1p(np.exp(-z))
    return np.log1p(np.exp(z))


def _softplus_inv(x: float) -> float:
    return x + math.log(-math.expm1(-x))


def _logistic(z):
    if np.asarray(value_of(z)) >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def _logit(p: float) -> float:
    return math.log(p) - math.log1p(-p)


class ThetaTransform:
    """Maps unconstrained vectors ``z`` to SimConfig parameters and back.

    ``p_base`` and ``alpha_gamma`` go through softplus, ``p_continue`` through
    the logistic function, the three alphas are passed through unchanged.
    """

    names = SimConfig.PARAMS

    def forward(self, z):
        out = []
        for name, zi in zip(self.names, z):
            if name in _POSITIVE:
                out.append(_softplus(zi))
            elif name in _UNIT:
                out.append(_logistic(zi))
            else:
                out.append(zi)
        return out

    def inverse(self, theta) -> np.ndarray:
        z = []
        for name, t in zip(self.names, theta):
            t = float(t)
            if name in _POSITIVE:
                z.append(_softplus_inv(t))
            elif name in _UNIT:
                z.append(_logit(t))
            else:
                z.append(t)
        return np.array(z)


# -- loss ----------------------------------------------------------------------


def burn_probability_map(state: ContinuousState):
    """Probability each cell has been on fire, ``p_burn + p_bd``.

    Computed as ``1 - p_un``, which is the same quantity on the simplex and
    cannot round above 1.
    """
    return 1.0 - state.p_un


def _pool_matrix(n: int, size: int) -> np.ndarray:
    """Row-averaging matrix for non-overlapping windows; the last window may be short."""
    blocks = -(-n // size)
    m = np.zeros((blocks, n))
    for b in range(blocks):
        lo, hi = b * size, min(n, (b + 1) * size)
        m[b, lo:hi] = 1.0 / (hi - lo)
    return m


def avg_pool(x, size: int):
    h, w = np.shape(x)[-2:]
    return _pool_matrix(h, size) @ x @ _pool_matrix(w, size).T


def bce(pred, mask, eps: float):
    p = np.minimum(np.maximum(pred, eps), 1.0 - eps)
    return np.mean(-(mask * np.log(p) + (1.0 - mask) * np.log(1.0 - p)))


def loss(pred, target: CalibrationTarget, lc: LossConfig = LossConfig()):
    """Weighted mean BCE plus MSE between average-pooled prediction and mask."""
    mask = target.burn_mask
    if np.shape(pred) != mask.shape:
        raise ValueError(f"prediction shape {np.shape(pred)} does not match mask {mask.shape}")
    total = 0.0
    if lc.bce_weight:
        total = total + lc.bce_weight * bce(pred, mask, lc.bce_epsilon)
    if lc.mse_weight:
        diff = avg_pool(pred, lc.pool_size) - avg_pool(mask, lc.pool_size)
        total = total + lc.mse_weight * np.mean(diff * diff)
    return total


def iou(pred_binary, target) -> float:
    pred_binary = np.asarray(pred_binary, dtype=bool)
    target = np.asarray(target, dtype=bool)
    if pred_binary.shape != target.shape:
        raise ValueError("masks differ in shape")
    union = np.count_nonzero(pred_binary | target)
    if union == 0:
        return 1.0
    return np.count_nonzero(pred_binary & target) / union


# -- Adam ----------------------------------------------------------------------


@dataclass
class AdamState:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    v: np.ndarray = field(default_factory=lambda: np.zeros(N_PARAMS))
    t: int = 0


def adam_step(state: AdamState, grad, theta):
    """Bias-corrected Adam update; returns a new state and new parameters."""
    grad = np.asarray(grad, dtype=np.float64)
    if not np.all(np.isfinite(grad)):
        raise CalibrationError(f"non-finite gradient {grad}")
    t = state.t + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    theta = np.asarray(theta, dtype=np.float64) - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return AdamState(state.lr, state.beta1, state.beta2, state.eps, m, v, t), theta


# -- driver --------------------------------------------------------------------


def rollout_loss(z, grid: GridState, initial: ContinuousState, target: CalibrationTarget,
                 lc: LossConfig, base: SimConfig, transform: ThetaTransform | None = None,
                 differentiate: bool = True):
    """Loss at unconstrained point ``z``; returns ``(loss, dloss/dz or None)``."""
    transform = transform or ThetaTransform()
    zs = [lift_parameter(i, zi) for i, zi in enumerate(z)] if differentiate else [float(zi) for zi in z]
    cfg = base.with_params(transform.forward(zs))
    final, _ = run(initial, grid, cfg, steps=target.horizon)
    value = loss(burn_probability_map(final), target, lc)
    if differentiate:
        return float(value.value), np.array(value.grad, dtype=np.float64)
    return float(value), None


@dataclass
class CalibrationResult:
    theta: np.ndarray
    best_loss: float
    history: list[float]
    thetas: list[np.ndarray]

    def config(self, base: SimConfig = SimConfig()) -> SimConfig:
        return base.with_params(self.theta)


def calibrate(grid: GridState, initial: ContinuousState, target: CalibrationTarget,
              lc: LossConfig = LossConfig(), *, iterations: int = 300, init_theta=None,
              lr: float = 1e-2, fixed=(), base: SimConfig = SimConfig(), max_horizon: int = 1000,
              callback=None) -> CalibrationResult:
    """Adam on the rollout loss.

    ``history[k]`` is the loss at the parameters after ``k`` updates, so the
    history has ``iterations + 1`` entries.  ``fixed`` names parameters whose
    gradient is zeroed.  ``callback(k, loss, theta)`` runs after every loss
    evaluation.  The run is fully deterministic, so no seed is needed.
    """
    if target.horizon > max_horizon:
        raise ValueError(f"horizon {target.horizon} exceeds the configured maximum {max_horizon}")
    if target.burn_mask.shape != grid.dims:
        raise ValueError(f"mask shape {target.burn_mask.shape} does not match grid {grid.dims}")
    transform = ThetaTransform()
    theta0 = np.array(base.params() if init_theta is None else init_theta, dtype=np.float64)
    z = transform.inverse(theta0)
    keep = np.array([name not in fixed for name in SimConfig.PARAMS], dtype=float)
    adam = AdamState(lr=lr)
    history, thetas = [], []
    best = (math.inf, theta0)
    for k in range(iterations + 1):
        value, grad = rollout_loss(z, grid, initial, target, lc, base, transform, differentiate=k < iterations)
        theta = np.array([float(t) for t in transform.forward(z)])
        if not math.isfinite(value):
            raise CalibrationError(f"non-finite loss {value}", k)
        history.append(value)
        thetas.append(theta)
        if value < best[0]:
            best = (value, theta)
        if callback is not None:
            callback(k, value, theta)
        log.debug("iter %d loss %.6g", k, value)
        if k < iterations:
            if not np.all(np.isfinite(grad)):
                raise CalibrationError(f"non-finite gradient {grad}", k)
            adam, z = adam_step(adam, grad * keep, z)
    return CalibrationResult(best[1], best[0], history, thetas)


# -- built-in recovery problem -----------------------------------------------------


@dataclass(frozen=True)
class SelfCalibrationProblem:
    """A target produced by the model itself, so the true parameters are known."""

    grid: GridState
    initial: ContinuousState
    target: CalibrationTarget
    true_config: SimConfig
    init_theta: np.ndarray


def self_calibration_problem(dims=(32, 32), horizon: int = 15, seed: int = 3, threshold: float = 0.5,
                             init_scale=0.5) -> SelfCalibrationProblem:
    """Burn mask from ``horizon`` deterministic steps at known parameters.

    The starting guess is the true parameter vector scaled by ``init_scale``
    (a scalar or one factor per parameter).
    """
    from .geodata import synthetic_environment
    from .grid import BURNING, WindField

    grid = synthetic_environment(dims, seed, forest_density=0.9, roughness=25.0)
    fire = np.zeros(grid.dims, dtype=np.int8)
    fire[dims[0] // 2, dims[1] // 2] = BURNING
    grid = grid.with_fire(fire).with_wind(WindField.uniform(grid.dims, 2.0, 0.6))
    truth = SimConfig(p_base=0.25, alpha_w1=0.15, alpha_w2=0.3, alpha_s=3.0, alpha_gamma=1.0, p_continue=0.6)
    initial = ContinuousState.from_fire(fire)
    final, _ = run(initial, grid, truth, steps=horizon)
    mask = (np.asarray(burn_probability_map(final)) >= threshold).astype(np.int8)
    init = np.asarray(truth.params(), dtype=np.float64) * np.broadcast_to(np.asarray(init_scale, float), (N_PARAMS,))
    return SelfCalibrationProblem(grid, initial, CalibrationTarget(mask, horizon), truth, init)
