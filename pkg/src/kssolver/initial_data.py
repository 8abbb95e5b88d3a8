"""Initial data builders, normalized so that ||p0||_{L2} and ||q0||_{H1}
each equal half of the requested amplitude."""

from __future__ import annotations

import math

import numpy as np

from . import spectral_core as sc
from .diagnostics import band_field
from .spectral_core import FrequencyGrid, SpectralField


def _normalize(p: np.ndarray, q: np.ndarray, grid: FrequencyGrid, eps0: float):
    p = p.copy()
    q = q.copy()
    p[grid.zero_index] = 0.0
    q[grid.zero_index] = 0.0
    if eps0 == 0:
        return SpectralField(grid, p * 0), SpectralField(grid, q * 0)
    npn = sc.norm_array(p, grid, "L2")
    nqn = sc.norm_array(q, grid, "H", 1.0)
    if npn == 0 or nqn == 0:
        raise ValueError("initial profile has no mean-free content")
    return SpectralField(grid, p * (eps0 / 2 / npn)), SpectralField(grid, q * (eps0 / 2 / nqn))


def gaussian_data(grid: FrequencyGrid, eps0: float, width: float = 0.125, shift: float = 0.1):
    """Gaussian bumps of width ``width * L``; q is offset by ``shift * L`` per axis."""
    X = grid.coordinates()
    w = width * grid.L
    c = grid.L / 2
    bump_p = np.exp(-sum((x - c) ** 2 for x in X) / (2 * w * w)) * np.ones(grid.shape)
    bump_q = np.exp(-sum((x - c - shift * grid.L) ** 2 for x in X) / (2 * w * w)) * np.ones(grid.shape)
    p = sc.fft_array(bump_p, grid) * grid.dealias_mask
    q = sc.fft_array(bump_q, grid) * grid.dealias_mask
    return _normalize(p, q, grid, eps0)


def random_band_data(grid: FrequencyGrid, eps0: float, seed: int, band=(0.0, math.inf)):
    """Band-limited random data with conjugate-symmetric coefficients."""
    if seed is None:
        raise ValueError("random_band initial data needs a seed")
    rng = np.random.default_rng(seed)
    lo, hi = band
    p = band_field(grid, rng, lo, hi)
    q = band_field(grid, rng, lo, hi)
    return _normalize(p, q, grid, eps0)
