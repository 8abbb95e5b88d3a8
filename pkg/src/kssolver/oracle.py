"""Brute-force references for the propagator and the nonlinear solver.

Neither routine uses the closed-form multipliers: the propagator reference
is a generic matrix exponential and the nonlinear reference integrates the
Fourier-space ODE system with an adaptive embedded Runge-Kutta method.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from . import spectral_core as sc
from .mild_solver import SolutionTrace, _require_mean_free, compute_G_array
from .spectral_core import FrequencyGrid, SpectralField

__all__ = ["OracleRun", "generator", "expm2x2", "direct_spectral_ode", "fd_G_1d"]

MAX_MODES = 10**6


@dataclass
class OracleRun:
    method: str
    rtol: float
    atol: float
    trace: SolutionTrace
    error_estimate: float = float("nan")
    nfev: int = 0
    extra: dict = field(default_factory=dict)


def generator(k) -> np.ndarray:
    """L(k) = [[-k^2, k], [-k, 0]], batched over the shape of ``k``."""
    k = np.asarray(k, dtype=float)
    A = np.zeros(k.shape + (2, 2))
    A[..., 0, 0] = -k * k
    A[..., 0, 1] = k
    A[..., 1, 0] = -k
    return A


def expm2x2(t, k) -> np.ndarray:
    """exp(t L(k)) by scipy's Pade scaling-and-squaring (batched)."""
    t, k = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(k, dtype=float))
    if np.any(t < 0) or np.any(k < 0):
        raise ValueError("time and wavenumber must be nonnegative")
    return expm(t[..., None, None] * generator(k))


def fd_G_1d(p_hat: np.ndarray, q_hat: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    """G with the flux divergence taken by second-order centered differences.

    Only the outer ``Lambda^{-1}`` and the potential ``Lambda^{-1} q`` are
    spectral; gradient and divergence are computed in physical space.
    Intended as a cross-check of the spectral G on tiny 1-D grids.
    """
    if grid.dim != 1:
        raise ValueError("finite-difference G is implemented for 1-D grids only")
    dx = grid.L / grid.n
    P = sc.ifft_array(p_hat, grid).real
    phi = sc.ifft_array(q_hat * grid.kmag_inv, grid).real
    dphi = (np.roll(phi, -1, axis=-1) - np.roll(phi, 1, axis=-1)) / (2 * dx)
    flux = P * dphi
    div = (np.roll(flux, -1, axis=-1) - np.roll(flux, 1, axis=-1)) / (2 * dx)
    G = sc.fft_array(div, grid) * grid.kmag_inv
    G[grid.zero_index] = 0.0
    return G


def _rhs_factory(grid: FrequencyGrid, nonlinear: bool, g_method: str):
    k = grid.kmag
    shape = grid.shape
    n = grid.size

    def rhs(_t, y):
        p = y[:n].reshape(shape)
        q = y[n:].reshape(shape)
        dp = -k * k * p + k * q
        if nonlinear:
            if g_method == "spectral":
                G = compute_G_array(p, q, grid, project=False)
            else:
                G = fd_G_1d(p, q, grid)
            dp = dp - k * G
        dq = -k * p
        return np.concatenate([dp.ravel(), dq.ravel()])

    return rhs


def _integrate(rhs, y0, T, times, rtol, atol):
    sol = solve_ivp(rhs, (0.0, T), y0, method="RK45", t_eval=times, rtol=rtol, atol=atol)
    if sol.status != 0:
        raise RuntimeError(f"ODE oracle failed: {sol.message}")
    return sol


def direct_spectral_ode(
    p0: SpectralField,
    q0: SpectralField,
    T: float,
    rtol: float = 1e-10,
    times=None,
    nonlinear: bool = True,
    g_method: str = "spectral",
    estimate_error: bool = False,
    atol: float | None = None,
) -> OracleRun:
    """Integrate the Fourier-space system with RK45 and dense output.

    ``atol`` defaults to ``1e-3 * rtol * max|y0|`` so that tiny modes are
    resolved relative to the data scale.  With ``estimate_error`` a second
    run at ``rtol / 100`` supplies the sup-L2 defect as error estimate.
    """
    sc._check_grid(p0.grid, q0.grid)
    g = p0.grid
    if g.size > MAX_MODES:
        raise ValueError(f"ODE oracle limited to {MAX_MODES} modes per field")
    if g_method not in ("spectral", "fd"):
        raise ValueError("g_method must be 'spectral' or 'fd'")
    _require_mean_free(p0.coeffs, g, "p0")
    _require_mean_free(q0.coeffs, g, "q0")
    if times is None:
        times = np.linspace(0.0, T, 33)
    times = np.asarray(times, dtype=float)
    pc = p0.coeffs.copy()
    qc = q0.coeffs.copy()
    pc[g.zero_index] = 0.0
    qc[g.zero_index] = 0.0
    y0 = np.concatenate([pc.ravel(), qc.ravel()]).astype(complex)
    scale = float(np.max(np.abs(y0), initial=0.0))
    if atol is None:
        atol = 1e-3 * rtol * scale if scale > 0 else 1e-300
    rhs = _rhs_factory(g, nonlinear, g_method)

    def run(rt, at):
        sol = _integrate(rhs, y0, T, times, rt, at)
        ys = sol.y.T
        p = ys[:, : g.size].reshape((times.size,) + g.shape)
        q = ys[:, g.size :].reshape((times.size,) + g.shape)
        return p, q, sol.nfev

    p, q, nfev = run(rtol, atol)
    meta = {"method": f"ode-rk45-{g_method}", "rtol": rtol, "atol": atol, "nonlinear": nonlinear}
    trace = SolutionTrace(g, times, p, q, None, meta)
    result = OracleRun(meta["method"], rtol, atol, trace, nfev=nfev)
    if estimate_error:
        p2, q2, nfev2 = run(rtol / 100, atol / 100)
        err = sc.norm_array(p - p2, g) + sc.norm_array(q - q2, g)
        result.error_estimate = float(np.max(err))
        result.nfev += nfev2
    return result
