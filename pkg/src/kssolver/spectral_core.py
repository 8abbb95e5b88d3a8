"""Periodic-box Fourier geometry, transforms, potentials and norms.

Conventions
-----------
Fields live on the periodic box ``[0, L)^d`` sampled at ``n`` points per
axis.  Spectral coefficients are normalized so that the zero mode equals
the spatial mean, i.e. ``f_hat = fftn(f) / n**d``.  With this choice the
continuum L2 norm is recovered by the rectangle rule in frequency::

    ||f||_{L2}^2 = L**d * sum_xi |f_hat(xi)|**2

All norm routines accept arrays with arbitrary leading (batch) axes; the
trailing ``dim`` axes are the grid axes.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "FrequencyGrid",
    "PhysicalField",
    "SpectralField",
    "CutoffTriple",
    "make_grid",
    "forward",
    "inverse",
    "riesz",
    "bessel",
    "build_cutoffs",
    "eta_radial",
    "psi_radial",
    "phi_radial",
    "norm",
    "norm_array",
    "lp_norm",
    "gradient",
    "dealias",
    "fft_workers",
]

LOW_EDGE = (1.5, 2.0)
HIGH_EDGE = (2.0**4, 2.0**5)


def fft_workers() -> int:
    """Worker count for scipy.fft, capped by the ``KS_THREADS`` variable."""
    raw = os.environ.get("KS_THREADS")
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Shared read-only geometry of a ``dim``-dimensional periodic box."""

    dim: int
    n: int
    L: float

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ValueError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.n < 4 or self.n % 2:
            raise ValueError(f"n must be even and >= 4, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"box length must be positive, got {self.L}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.dim, 0))

    @property
    def k_min(self) -> float:
        return 2.0 * math.pi / self.L

    @property
    def k_max(self) -> float:
        return math.pi * self.n / self.L

    @property
    def volume(self) -> float:
        return self.L**self.dim

    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer mode indices in FFT order, values in ``[-n/2, n/2)``."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)

    @cached_property
    def wavevector(self) -> tuple[np.ndarray, ...]:
        """Broadcastable per-axis wavenumber arrays ``xi_j``."""
        k1 = self.k_min * self.mode_index.astype(float)
        out = []
        for j in range(self.dim):
            shp = [1] * self.dim
            shp[j] = self.n
            out.append(k1.reshape(shp))
        return tuple(out)

    @cached_property
    def kmag(self) -> np.ndarray:
        """|xi| on the full grid."""
        k2 = np.zeros(self.shape)
        for kj in self.wavevector:
            k2 = k2 + kj**2
        kmag = np.sqrt(k2)
        kmag.setflags(write=False)
        return kmag

    @cached_property
    def kmag_inv(self) -> np.ndarray:
        """1/|xi| with the zero mode mapped to 0."""
        with np.errstate(divide="ignore"):
            inv = np.where(self.kmag > 0, 1.0 / np.where(self.kmag > 0, self.kmag, 1.0), 0.0)
        inv.setflags(write=False)
        return inv

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """True on modes kept by the 2/3 rule (every axis index m with 3|m| < n)."""
        keep1 = 3 * np.abs(self.mode_index) < self.n
        mask = np.ones(self.shape, dtype=bool)
        for j in range(self.dim):
            shp = [1] * self.dim
            shp[j] = self.n
            mask = mask & keep1.reshape(shp)
        return mask

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes where some axis index equals -n/2."""
        ny1 = self.mode_index == -(self.n // 2)
        mask = np.zeros(self.shape, dtype=bool)
        for j in range(self.dim):
            shp = [1] * self.dim
            shp[j] = self.n
            mask = mask | ny1.reshape(shp)
        return mask

    @property
    def zero_index(self) -> tuple:
        """Index of the zero mode, valid for arrays with leading batch axes."""
        return (Ellipsis,) + (0,) * self.dim

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Broadcastable physical coordinates ``x_j`` in ``[0, L)``."""
        x1 = self.L * np.arange(self.n) / self.n
        out = []
        for j in range(self.dim):
            shp = [1] * self.dim
            shp[j] = self.n
            out.append(x1.reshape(shp))
        return tuple(out)

    def same_as(self, other: "FrequencyGrid") -> bool:
        return self is other or (
            self.dim == other.dim and self.n == other.n and self.L == other.L
        )

    def to_dict(self) -> dict:
        return {"dim": self.dim, "n": self.n, "L": self.L}


def make_grid(dim: int, n: int, L: float) -> FrequencyGrid:
    return FrequencyGrid(int(dim), int(n), float(L))


def _check_grid(a: FrequencyGrid, b: FrequencyGrid):
    if not a.same_as(b):
        raise ValueError(f"grid mismatch: {a.to_dict()} vs {b.to_dict()}")


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """Real samples of a field on ``grid`` (trailing axes = grid axes)."""

    grid: FrequencyGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape[-self.grid.dim:] != self.grid.shape:
            raise ValueError(
                f"sample shape {vals.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients (mean-normalized) of a field on ``grid``."""

    grid: FrequencyGrid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape[-self.grid.dim:] != self.grid.shape:
            raise ValueError(
                f"coefficient shape {c.shape} does not match grid {self.grid.shape}"
            )
        object.__setattr__(self, "coeffs", c)

    @property
    def zero_mode(self) -> complex:
        return complex(self.coeffs[(0,) * self.grid.dim])

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(self.grid, coeffs)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_grid(self.grid, other.grid)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_grid(self.grid, other.grid)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self.with_coeffs(-self.coeffs)

    def conjugate_symmetry_defect(self) -> float:
        """max |f_hat(xi) - conj(f_hat(-xi))|; zero for real fields."""
        c = self.coeffs
        flipped = c
        for ax in self.grid.axes:
            flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
        return float(np.max(np.abs(c - np.conj(flipped)), initial=0.0))


# ---------------------------------------------------------------- transforms


def fft_array(values: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    return sfft.fftn(values, axes=grid.axes, norm="forward", workers=fft_workers())


def ifft_array(coeffs: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    return sfft.ifftn(coeffs, axes=grid.axes, norm="forward", workers=fft_workers())


def forward(f: PhysicalField) -> SpectralField:
    return SpectralField(f.grid, fft_array(f.values, f.grid))


def inverse(fh: SpectralField) -> PhysicalField:
    return PhysicalField(fh.grid, ifft_array(fh.coeffs, fh.grid).real)


# ---------------------------------------------------------------- potentials


def riesz(fh: SpectralField, s: float) -> SpectralField:
    """Multiply by |xi|**s; the zero mode is always projected out.

    For ``s < 0`` a nonzero input zero mode is discarded rather than rejected.
    """
    g = fh.grid
    if s >= 0:
        sym = g.kmag**s
    else:
        sym = g.kmag_inv ** (-s)
    out = fh.coeffs * sym
    out[g.zero_index] = 0.0
    return fh.with_coeffs(out)


def bessel(fh: SpectralField, s: float) -> SpectralField:
    """Multiply by (1 + |xi|^2)**(s/2)."""
    g = fh.grid
    return fh.with_coeffs(fh.coeffs * (1.0 + g.kmag**2) ** (0.5 * s))


def gradient(fh: SpectralField) -> tuple[SpectralField, ...]:
    """Spectral gradient ``i xi_j f_hat``; Nyquist modes are zeroed."""
    g = fh.grid
    keep = ~g.nyquist_mask
    return tuple(fh.with_coeffs(1j * kj * fh.coeffs * keep) for kj in g.wavevector)


def dealias(fh: SpectralField) -> SpectralField:
    return fh.with_coeffs(fh.coeffs * fh.grid.dealias_mask)


# ---------------------------------------------------------------- cutoffs


def _smooth_step(x):
    """C-infinity transition: 0 for x <= 0, 1 for x >= 1."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def eta_radial(r):
    """Low-frequency cutoff: 1 on |xi| <= 3/2, 0 on |xi| >= 2."""
    lo, hi = LOW_EDGE
    return 1.0 - _smooth_step((np.asarray(r, dtype=float) - lo) / (hi - lo))


def psi_radial(r):
    """High-frequency cutoff: 0 on |xi| <= 2^4, 1 on |xi| >= 2^5."""
    lo, hi = HIGH_EDGE
    return _smooth_step((np.asarray(r, dtype=float) - lo) / (hi - lo))


def phi_radial(r):
    return 1.0 - eta_radial(r) - psi_radial(r)


@dataclass(frozen=True, eq=False)
class CutoffTriple:
    """Low/medium/high partition of unity sampled on a grid."""

    grid: FrequencyGrid
    eta: np.ndarray
    phi: np.ndarray
    psi: np.ndarray
    psi_empty: bool = field(default=False)

    def low(self, fh: SpectralField) -> SpectralField:
        return fh.with_coeffs(fh.coeffs * self.eta)

    def medium(self, fh: SpectralField) -> SpectralField:
        return fh.with_coeffs(fh.coeffs * self.phi)

    def high(self, fh: SpectralField) -> SpectralField:
        return fh.with_coeffs(fh.coeffs * self.psi)


_CUTOFF_CACHE: dict[tuple, CutoffTriple] = {}


def build_cutoffs(grid: FrequencyGrid) -> CutoffTriple:
    key = (grid.dim, grid.n, grid.L)
    hit = _CUTOFF_CACHE.get(key)
    if hit is not None:
        return hit
    r = grid.kmag
    eta = eta_radial(r)
    psi = psi_radial(r)
    phi = 1.0 - eta - psi
    for a in (eta, phi, psi):
        a.setflags(write=False)
    triple = CutoffTriple(grid, eta, phi, psi, psi_empty=not bool(np.any(psi > 0)))
    _CUTOFF_CACHE[key] = triple
    return triple


# ---------------------------------------------------------------- norms

_KINDS = ("L2", "H", "Hdot", "Hpsi")


def _weight(grid: FrequencyGrid, kind: str, s: float) -> np.ndarray:
    r = grid.kmag
    if kind == "L2":
        return np.ones(grid.shape)
    if kind == "H":
        return (1.0 + r**2) ** s
    if kind == "Hdot":
        if s >= 0:
            w = r ** (2 * s)
        else:
            w = grid.kmag_inv ** (-2 * s)
        w = np.array(w)
        w[grid.zero_index] = 0.0
        return w
    if kind == "Hpsi":
        w = build_cutoffs(grid).psi ** 2 * r ** (2 * s)
        return w
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {_KINDS}")


def norm_array(coeffs: np.ndarray, grid: FrequencyGrid, kind: str = "L2", s: float = 0.0):
    """Norm of a batch of coefficient arrays (reduces the trailing grid axes)."""
    coeffs = np.asarray(coeffs)
    if kind == "Hdot" and s < 0:
        z = np.abs(coeffs[grid.zero_index])
        scale = np.max(np.abs(coeffs), initial=0.0)
        if np.any(z > 1e-12 * max(scale, 1e-300)):
            raise ValueError("negative-order homogeneous norm requires a mean-zero field")
    w = _weight(grid, kind, s)
    sq = np.sum(w * (coeffs.real**2 + coeffs.imag**2), axis=grid.axes)
    return np.sqrt(grid.volume * sq)


def norm(fh: SpectralField, kind: str = "L2", s: float = 0.0) -> float:
    """Plancherel norm of ``fh``.

    kind : ``"L2"``, ``"H"`` (inhomogeneous H^s), ``"Hdot"`` (homogeneous)
        or ``"Hpsi"`` (homogeneous norm of the high-frequency piece; a
        seminorm that vanishes on fields supported in |xi| <= 2^4).
    """
    return float(norm_array(fh.coeffs, fh.grid, kind, s))


def lp_norm(f: PhysicalField, p: float) -> float:
    """Continuum L^p norm by the rectangle rule; ``p = inf`` is the grid max."""
    v = np.abs(f.values)
    if math.isinf(p):
        return float(np.max(v))
    g = f.grid
    return float((g.volume / g.size * np.sum(v**p)) ** (1.0 / p))
