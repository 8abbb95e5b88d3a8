"""Norm time series, weighted decay fits, v-amplitude checks and ensemble
ratio studies for the bilinear and Bernstein-type inequalities."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import spectral_core as sc
from .mild_solver import (
    SMOOTHING_ORDER,
    ModelParams,
    SolutionTrace,
    compute_G_array,
    pq_to_uv,
    trapezoid_weights,
    xy_norms,
)
from .spectral_core import FrequencyGrid

__all__ = [
    "NormSeries",
    "DecayReport",
    "EstimateReport",
    "CSV_CHANNELS",
    "norm_timeseries",
    "weighted_sup",
    "v_amplitude_check",
    "energy_defect",
    "band_field",
    "bilinear_ratios",
    "bilinear_check",
    "bernstein_check",
    "solution_functional",
]

CSV_CHANNELS = ("L2_p", "H1_q", "H1dot_p", "H1dot_q", "Hpsi74_p", "Linf_v_over_c", "energy", "G_L2")


@dataclass
class NormSeries:
    times: np.ndarray
    channels: dict
    X: float = float("nan")
    Y: float = float("nan")

    def __post_init__(self):
        n = len(self.times)
        for name, v in self.channels.items():
            if len(v) != n:
                raise ValueError(f"channel {name} has length {len(v)}, expected {n}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def to_csv(self, columns=CSV_CHANNELS) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t",) + tuple(columns))
        for i, t in enumerate(self.times):
            w.writerow([f"{t:.17g}"] + [f"{self.channels[c][i]:.17g}" for c in columns])
        return buf.getvalue()


@dataclass
class DecayReport:
    channel: str
    gamma: float
    weighted_sup: float
    sup_time: float
    window: tuple
    exponent: float = float("nan")
    exponent_ci: tuple = (float("nan"), float("nan"))
    fit_window: tuple | None = None
    bound: float | None = None
    passed: bool = True
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "channel": self.channel,
            "gamma": self.gamma,
            "weighted_sup": self.weighted_sup,
            "sup_time": self.sup_time,
            "window": list(self.window),
            "exponent": self.exponent,
            "exponent_ci": list(self.exponent_ci),
            "fit_window": None if self.fit_window is None else list(self.fit_window),
            "bound": self.bound,
            "pass": self.passed,
            "details": self.details,
        }


@dataclass
class EstimateReport:
    """Per-seed left/right values of one inequality and summary statistics."""

    id: str
    left: np.ndarray
    right: np.ndarray
    ratio: np.ndarray
    note: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def max_ratio(self) -> float:
        return float(np.max(self.ratio))

    @property
    def min_ratio(self) -> float:
        return float(np.min(self.ratio))

    @property
    def spread(self) -> float:
        lo = self.min_ratio
        return self.max_ratio / lo if lo > 0 else (1.0 if self.max_ratio == 0 else math.inf)

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.ratio)))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "n": int(self.ratio.size),
            "max_ratio": self.max_ratio,
            "min_ratio": self.min_ratio,
            "mean_ratio": float(np.mean(self.ratio)),
            "spread": self.spread,
            "finite": self.finite,
            "note": self.note,
        }


# ---------------------------------------------------------------- series


def _batched_ifft_real(coeffs, grid):
    return sc.ifft_array(coeffs, grid).real


def norm_timeseries(trace: SolutionTrace, params: ModelParams | None = None, s_psi: float = SMOOTHING_ORDER) -> NormSeries:
    """Evaluate every norm channel at the stored times of ``trace``."""
    g = trace.grid
    params = params or ModelParams()
    p, q = trace.p, trace.q
    ch = {
        "L2_p": sc.norm_array(p, g, "L2"),
        "H1dot_p": sc.norm_array(p, g, "Hdot", 1.0),
        "H1dot_q": sc.norm_array(q, g, "Hdot", 1.0),
        "H1_q": sc.norm_array(q, g, "H", 1.0),
        "H2_p": sc.norm_array(p, g, "H", 2.0),
        "Hpsi74_p": sc.norm_array(p, g, "Hpsi", s_psi),
        "Lam74_p": sc.norm_array(p, g, "Hdot", s_psi),
    }
    ch["grad_pq"] = np.sqrt(ch["H1dot_p"] ** 2 + ch["H1dot_q"] ** 2)
    lam_inv_q = _batched_ifft_real(q * g.kmag_inv, g)
    ax = g.axes
    ch["Linf_Laminv_q"] = np.max(np.abs(lam_inv_q), axis=ax)
    ch["Linf_v_over_c"] = np.exp(params.v_rate * trace.times) * np.exp(np.max(-lam_inv_q, axis=ax))
    ch["L2_q"] = sc.norm_array(q, g, "L2")
    ch["energy"] = 0.5 * (ch["L2_p"] ** 2 + ch["L2_q"] ** 2)
    G = trace.G if trace.G is not None else compute_G_array(p, q, g)
    ch["G_L2"] = sc.norm_array(G, g, "L2")
    X, Y = xy_norms(p, q, g, trace.times, s_psi)
    return NormSeries(trace.times.copy(), ch, X, Y)


def solution_functional(series: NormSeries) -> float:
    """sup ||p||_{L2} + sup ||q||_{H1} + L2-in-time H1dot norms of p and q
    + L1-in-time H^{7/4}_psi norm of p."""
    w = trapezoid_weights(series.times)
    return float(
        np.max(series["L2_p"])
        + np.max(series["H1_q"])
        + math.sqrt(np.sum(w * series["H1dot_p"] ** 2))
        + math.sqrt(np.sum(w * series["H1dot_q"] ** 2))
        + np.sum(w * series["Hpsi74_p"])
    )


def _window_mask(times, window):
    lo, hi = window
    return (times >= lo - 1e-12) & (times <= hi + 1e-12)


def weighted_sup(series: NormSeries, channel: str, gamma: float, window=None, fit_window=None, bound=None) -> DecayReport:
    """sup over the window of ``(1+t)^gamma * value`` and an optional
    least-squares exponent of log(value) against log(1+t)."""
    if channel not in series.channels:
        raise KeyError(f"unknown channel {channel!r}")
    t = series.times
    v = np.asarray(series[channel], dtype=float)
    window = (float(t[0]), float(t[-1])) if window is None else tuple(map(float, window))
    sel = _window_mask(t, window)
    if not np.any(sel):
        raise ValueError(f"empty window {window}")
    wv = (1 + t[sel]) ** gamma * v[sel]
    j = int(np.argmax(wv))
    rep = DecayReport(channel, float(gamma), float(wv[j]), float(t[sel][j]), window, bound=bound)
    if fit_window is not None:
        fs = _window_mask(t, fit_window)
        if np.count_nonzero(fs) < 3:
            raise ValueError(f"fit window {fit_window} holds fewer than 3 samples")
        if np.any(v[fs] <= 0):
            raise ValueError("log-log fit needs positive values")
        x = np.log1p(t[fs])
        y = np.log(v[fs])
        res = stats.linregress(x, y)
        half = stats.t.ppf(0.975, x.size - 2) * res.stderr
        rep.exponent = float(res.slope)
        rep.exponent_ci = (float(res.slope - half), float(res.slope + half))
        rep.fit_window = tuple(map(float, fit_window))
    rep.passed = bool(np.isfinite(rep.weighted_sup)) and (bound is None or rep.weighted_sup <= bound)
    return rep


def v_amplitude_check(trace: SolutionTrace, params: ModelParams, tail=None, rate_tol: float = 0.05, slack: float = 1e-12) -> DecayReport:
    """Check the two-sided bound on ||v||_inf / c at every stored time and fit
    its exponential rate over the tail window."""
    g = trace.grid
    t = trace.times
    vmax = np.empty(t.size)
    M = np.empty(t.size)
    for i, st in enumerate(trace.states()):
        _, v = pq_to_uv(st, params)
        vmax[i] = sc.lp_norm(v, math.inf) / params.c_gauge
        M[i] = float(np.max(np.abs(sc.ifft_array(st.q.coeffs * g.kmag_inv, g).real)))
    amp = np.exp(params.v_rate * t)
    lower = amp * np.exp(-M)
    upper = amp * np.exp(M)
    bad = (vmax < lower * (1 - slack)) | (vmax > upper * (1 + slack))
    sandwich_ok = not bool(np.any(bad))
    tail = (t[-1] / 2, t[-1]) if tail is None else tuple(map(float, tail))
    sel = _window_mask(t, tail)
    if np.count_nonzero(sel) < 2:
        raise ValueError("tail window holds fewer than 2 samples")
    res = stats.linregress(t[sel], np.log(vmax[sel]))
    rate = params.v_rate
    rate_ok = abs(res.slope - rate) <= rate_tol * abs(rate) if rate != 0 else abs(res.slope) <= rate_tol
    details = {
        "sandwich_ok": sandwich_ok,
        "violation_t": float(t[np.argmax(bad)]) if not sandwich_ok else None,
        "laminv_q_sup": float(np.max(M)),
        "expected_rate": rate,
        "rate_ok": bool(rate_ok),
    }
    half = stats.t.ppf(0.975, max(1, sel.sum() - 2)) * res.stderr
    return DecayReport(
        "Linf_v_over_c", 0.0, float(np.max(vmax)), float(t[np.argmax(vmax)]), (float(t[0]), float(t[-1])),
        exponent=float(res.slope), exponent_ci=(float(res.slope - half), float(res.slope + half)),
        fit_window=tail, passed=bool(sandwich_ok and rate_ok and np.isfinite(np.max(M))), details=details,
    )


def _inner(a, b, grid):
    return grid.volume * np.sum((np.conj(a) * b).real, axis=grid.axes)


def energy_defect(trace: SolutionTrace, nonlinear: bool = True) -> np.ndarray:
    """Centered-difference defect of the energy law at interior stored times:
    ``(E[i+1]-E[i-1])/(t[i+1]-t[i-1]) + ||Lambda p||^2 + <Lambda p, G>``."""
    g = trace.grid
    t = trace.times
    if t.size < 3:
        raise ValueError("need at least 3 stored times")
    E = 0.5 * (sc.norm_array(trace.p, g) ** 2 + sc.norm_array(trace.q, g) ** 2)
    lp = trace.p * g.kmag
    rhs = -_inner(lp, lp, g)
    if nonlinear:
        G = trace.G if trace.G is not None else compute_G_array(trace.p, trace.q, g)
        rhs = rhs - _inner(lp, G, g)
    dE = (E[2:] - E[:-2]) / (t[2:] - t[:-2])
    return dE - rhs[1:-1]


# ---------------------------------------------------------------- synthetic fields


def band_field(grid: FrequencyGrid, rng: np.random.Generator, lo: float = 0.0, hi: float = math.inf, batch=()):
    """Real random field with spectrum restricted to ``lo <= |xi| <= hi``.

    White noise in physical space is transformed and masked, which keeps the
    coefficients conjugate-symmetric.  Only dealiased modes are kept so that
    quadratic products are exact on the grid.  The zero mode is removed.
    """
    noise = rng.standard_normal(tuple(batch) + grid.shape)
    c = sc.fft_array(noise, grid)
    r = grid.kmag
    mask = (r >= lo) & (r <= hi) & grid.dealias_mask & ~grid.nyquist_mask
    c = c * mask
    c[grid.zero_index] = 0.0
    return c


def _heat_flow(c0, grid, times, rate):
    return np.exp(-rate * times.reshape((-1,) + (1,) * grid.dim) * grid.kmag**2) * c0


def _grad_phys(c, grid):
    keep = ~grid.nyquist_mask
    return [sc.ifft_array(1j * kj * keep * c, grid).real for kj in grid.wavevector]


def _l2_phys(f, grid):
    return np.sqrt(grid.volume / grid.size * np.sum(f**2, axis=grid.axes))


def bilinear_ratios(u, v, grid: FrequencyGrid, times, s_psi: float = SMOOTHING_ORDER):
    """Left and right sides of the two product estimates for stacked
    coefficient arrays ``u[t]``, ``v[t]``.

    Returns ``((left_grad, right_grad), (left_prod, right_prod), terms)`` where
    ``terms`` holds the two summands of the first right side.
    """
    w = trapezoid_weights(times)
    U = sc.ifft_array(u, grid).real
    V = sc.ifft_array(v, grid).real
    gu = _grad_phys(u, grid)
    gv = _grad_phys(v, grid)
    u_gv = np.sqrt(sum(_l2_phys(U * d, grid) ** 2 for d in gv))
    gu_v = np.sqrt(sum(_l2_phys(d * V, grid) ** 2 for d in gu))
    left_grad = float(np.sum(w * u_gv) + np.sum(w * gu_v))
    u_h1 = math.sqrt(float(np.sum(w * sc.norm_array(u, grid, "Hdot", 1.0) ** 2)))
    v_h1 = math.sqrt(float(np.sum(w * sc.norm_array(v, grid, "Hdot", 1.0) ** 2)))
    u_psi = float(np.sum(w * sc.norm_array(u, grid, "Hpsi", s_psi)))
    v_inf = float(np.max(sc.norm_array(v, grid, "H", 1.0)))
    right_grad = u_h1 * v_h1 + u_psi * v_inf
    left_prod = math.sqrt(float(np.sum(w * _l2_phys(U * V, grid) ** 2)))
    right_prod = u_h1 * v_inf
    terms = {"smooth": u_h1 * v_h1, "psi": u_psi * v_inf}
    return (left_grad, right_grad), (left_prod, right_prod), terms


def _ratio(left, right):
    if right == 0:
        if left == 0:
            return 0.0
        raise ValueError("degenerate input: right side vanishes but left side does not")
    return left / right


def bilinear_check(
    seeds: int = 100,
    grid: FrequencyGrid | None = None,
    T: float = 4.0,
    n_t: int = 33,
    u_band=(0.0, math.inf),
    v_band=(0.0, math.inf),
    zero_u: bool = False,
    seed0: int = 0,
) -> list[EstimateReport]:
    """Ratio statistics of the two product estimates over random heat-flow
    fields ``u(t) = exp(t Delta) u0`` and ``v(t) = exp(t Delta / 2) v0``."""
    grid = grid or sc.make_grid(1, 256, 64 * math.pi)
    times = np.linspace(0.0, T, n_t)
    rows = {"product-grad": [], "product-L2": []}
    psi_share = []
    for s in range(seeds):
        rng = np.random.default_rng(seed0 + s)
        u0 = band_field(grid, rng, *u_band)
        v0 = band_field(grid, rng, *v_band)
        if zero_u:
            u0 = np.zeros_like(u0)
        for c0 in (u0, v0):
            nrm = sc.norm_array(c0, grid)
            if nrm > 0:
                c0 /= nrm
        u = _heat_flow(u0, grid, times, 1.0)
        v = _heat_flow(v0, grid, times, 0.5)
        (l_grad, r_grad), (l_prod, r_prod), terms = bilinear_ratios(u, v, grid, times)
        psi_share.append(terms["psi"] / r_grad if r_grad > 0 else 0.0)
        rows["product-grad"].append((l_grad, r_grad, _ratio(l_grad, r_grad)))
        rows["product-L2"].append((l_prod, r_prod, _ratio(l_prod, r_prod)))
    out = []
    for rid, data in rows.items():
        a = np.array(data)
        out.append(EstimateReport(rid, a[:, 0], a[:, 1], a[:, 2]))
    out[0].extra["psi_share"] = np.array(psi_share)
    return out


def bernstein_check(
    seeds: int = 100,
    grid: FrequencyGrid | None = None,
    s: float = 1.0,
    c1: float = 4.0,
    c2: float = 8.0,
    s_embed: float = SMOOTHING_ORDER,
    seed0: int = 0,
) -> list[EstimateReport]:
    """Ratio ensembles for the Bernstein-type inequalities on the torus.

    * ``bernstein-Linf`` and ``bernstein-L6``: ``||Lambda^s f||_{L^b}`` over
      ``c2^(s + d(1/2 - 1/b)) ||f||_{L2}`` for fields with ``|xi| <= c2``.
    * ``band-lower`` / ``band-upper``: ``c1^s ||f|| / ||Lambda^s f||`` and
      ``||Lambda^s f|| / (c2^s ||f||)`` for fields with ``c1 < |xi| < c2``.
    * ``high-L2``: ``||f||_{L2} / ||<Lambda>^s f||_{L2}`` for ``|xi| >= c1``.
    * ``high-embed``: ``||f||_inf / ||f||_{H^s_embed}`` for the same fields.
    * ``GN``: ``||Lambda^{3/2} f|| / (||Lambda^{7/4} f||^{2/3} ||grad f||^{1/3})``.
    """
    grid = grid or sc.make_grid(3, 32, 2 * math.pi)
    d = grid.dim
    rows = {k: [] for k in ("bernstein-Linf", "bernstein-L6", "band-lower", "band-upper", "high-L2", "high-embed", "GN")}
    for sd in range(seeds):
        rng = np.random.default_rng(seed0 + sd)
        low = band_field(grid, rng, 0.0, c2)
        band = band_field(grid, rng, c1 * (1 + 1e-12), c2 * (1 - 1e-12))
        high = band_field(grid, rng, c1, math.inf)
        f2 = sc.norm_array(low, grid)
        lam = sc.ifft_array(low * grid.kmag**s, grid).real
        phys = sc.PhysicalField(grid, lam)
        for b, key in ((math.inf, "bernstein-Linf"), (6.0, "bernstein-L6")):
            right = c2 ** (s + d * (0.5 - (0.0 if math.isinf(b) else 1.0 / b))) * f2
            left = sc.lp_norm(phys, b)
            rows[key].append((left, right))
        fb = sc.norm_array(band, grid)
        lb = sc.norm_array(band, grid, "Hdot", s)
        rows["band-lower"].append((c1**s * fb, lb))
        rows["band-upper"].append((lb, c2**s * fb))
        rows["high-L2"].append((sc.norm_array(high, grid), sc.norm_array(high, grid, "H", s)))
        hi_phys = sc.PhysicalField(grid, sc.ifft_array(high, grid).real)
        rows["high-embed"].append((sc.lp_norm(hi_phys, math.inf), sc.norm_array(high, grid, "H", s_embed)))
        a32 = sc.norm_array(low, grid, "Hdot", 1.5)
        a74 = sc.norm_array(low, grid, "Hdot", 1.75)
        a1 = sc.norm_array(low, grid, "Hdot", 1.0)
        rows["GN"].append((a32, a74 ** (2 / 3) * a1 ** (1 / 3)))
    out = []
    for key, data in rows.items():
        a = np.array(data, dtype=float)
        ratio = np.array([_ratio(l, r) for l, r in a])
        out.append(EstimateReport(key, a[:, 0], a[:, 1], ratio))
    return out
