"""Per-cell spread math: wind and slope factors, propagation potential, ignition.

Every function here is written against numpy operators only, so it accepts
plain floats, ndarrays, or :class:`~emberline.autodiff.DualVector` values (for
the config parameters and/or the burning weights) without separate code paths.
"""
from __future__ import annotations

import numpy as np

from .grid import OFFSET_ANGLES, OFFSET_INDEX, OFFSETS, CellIndex, GridState, NeighborOffset, SimConfig, offset_angle


def kappa_wind(speed, direction, d: NeighborOffset, cfg: SimConfig):
    """Wind factor for spreading along ``d`` given source-cell wind."""
    return _kappa_wind(speed, direction, offset_angle(d), cfg)


def _kappa_wind(speed, direction, angle, cfg):
    return np.exp(cfg.alpha_w1 * speed) * np.exp(cfg.alpha_w2 * speed * (np.cos(angle - direction) - 1.0))


def kappa_slope(s, cfg: SimConfig):
    """Slope factor; above 1 uphill (``s > 0``), below 1 downhill."""
    return np.exp(cfg.alpha_s * s)


def fuel_factor(veg, den):
    return (1.0 + veg) * (1.0 + den)


def _potential(veg, den, speed, direction, slope, angle, cfg):
    return (cfg.p_base * fuel_factor(veg, den)
            * _kappa_wind(speed, direction, angle, cfg)
            * kappa_slope(slope, cfg))


def potential(u: CellIndex, d: NeighborOffset, grid: GridState, cfg: SimConfig):
    """Propagation potential from source cell ``u`` toward neighbor offset ``d``."""
    r, c = u
    return _potential(grid.fuel.veg[r, c], grid.fuel.den[r, c],
                      grid.wind.speed[r, c], grid.wind.direction[r, c],
                      grid.slope[OFFSET_INDEX[NeighborOffset(*d)], r, c], offset_angle(d), cfg)


def potential_field(grid: GridState, cfg: SimConfig, wind=None):
    """Potentials for all source cells and offsets, shape ``(8, H, W)``.

    ``wind`` overrides ``grid.wind`` (used for time-varying wind schedules).
    """
    wind = grid.wind if wind is None else wind
    angles = OFFSET_ANGLES[:, None, None]
    return _potential(grid.fuel.veg, grid.fuel.den, wind.speed, wind.direction, grid.slope, angles, cfg)


def susceptibility(veg, den, cfg: SimConfig):
    return cfg.alpha_gamma * fuel_factor(veg, den)


def susceptibility_field(grid: GridState, cfg: SimConfig):
    return susceptibility(grid.fuel.veg, grid.fuel.den, cfg)


def arrival_intensity(v: CellIndex, burning_weight, grid: GridState, cfg: SimConfig):
    """Sum of ``burning_weight(u) * potential(u, v - u)`` over in-bounds neighbors ``u``."""
    total = 0.0
    for d, u in grid.neighbors(CellIndex(*v)):
        toward_v = -d
        total = total + burning_weight[u.row, u.col] * potential(u, toward_v, grid, cfg)
    return total


def ignition_probability(v: CellIndex, lam, grid: GridState, cfg: SimConfig):
    """``1 - exp(-gamma(v) * lam)`` with the target cell's susceptibility."""
    r, c = v
    return ignition_from_rate(susceptibility(grid.fuel.veg[r, c], grid.fuel.den[r, c], cfg) * lam)


def ignition_from_rate(rate):
    return -np.expm1(-rate)


def intensity_field(burning_weight, phi):
    """Arrival intensity for every cell.

    ``burning_weight`` has shape ``(..., H, W)`` (leading axes are batch axes)
    and ``phi`` has shape ``(8, H, W)``.  Sources outside the grid contribute
    nothing.  Summation order over offsets is fixed, so results do not depend
    on batch shape.
    """
    emitted = burning_weight[..., None, :, :] * phi
    ndim = np.ndim(emitted)
    pads = [(0, 0)] * (ndim - 2) + [(1, 1), (1, 1)]
    padded = np.pad(emitted, pads)
    h, w = np.shape(emitted)[-2:]
    total = None
    for k, d in enumerate(OFFSETS):
        # target (r, c) receives from source (r - dy, c - dx)
        part = padded[..., k, 1 - d.dy:1 - d.dy + h, 1 - d.dx:1 - d.dx + w]
        total = part if total is None else total + part
    return total


def ignition_field(burning_weight, phi, gamma):
    return ignition_from_rate(gamma * intensity_field(burning_weight, phi))
