"""Closed-form linear propagator of the coupled (p, q) system.

Per Fourier mode with wavenumber ``k = |xi|`` the linear system is
``d/dt (p, q) = L(k) (p, q)`` with ``L(k) = [[-k^2, k], [-k, 0]]``.
Its exponential is written through two scalar multipliers::

    exp(t L(k)) = [[ m1,        2 m2 / k  ],
                   [ -2 m2 / k, m1 + 2 m2 ]]

The eigenvalues are real for ``k > 2``, a double root ``-2`` at ``k = 2``
and a complex pair for ``k < 2``.  The raw difference quotients lose all
precision near ``k = 2``; here they are rewritten through
``phi1(-z) = (1 - exp(-z)) / z`` and ``sinc``, both switched to short
Taylor series for tiny arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .spectral_core import SpectralField, _check_grid

__all__ = [
    "EigenPair",
    "MultiplierSample",
    "BoundReport",
    "eigenvalues",
    "multipliers",
    "omegas",
    "m12",
    "propagator",
    "m1_symbol_derivative",
    "apply_linear",
    "apply_linear_array",
    "default_samples",
    "certify_bounds",
    "certify_smoothing",
    "sup_weighted_decay",
    "fit_weighted_decay",
    "DecayFit",
]

SERIES_CUTOFF = 1e-4
ROUND_OFF_SLACK = 1e-9
DECAY_C_CANDIDATES = (0.125, 0.25, 0.375)
DECAY_C = 0.25


@dataclass(frozen=True)
class EigenPair:
    lambda_plus: complex
    lambda_minus: complex
    regime: str
    root: float  # Xi for real_distinct, Theta for complex_pair, 0 when degenerate


@dataclass(frozen=True)
class MultiplierSample:
    t: float
    k: float
    m1: float
    m2: float
    regime: str
    stable_branch: bool


@dataclass
class BoundReport:
    """Outcome of checking one inequality over a sample set.

    ``worst_ratio`` is ``|value| / shape`` maximized over samples, where the
    bound reads ``|value| <= constant * shape``.
    """

    id: str
    regime: str
    domain: str
    worst_ratio: float
    constant: float
    passed: bool
    worst_t: float = float("nan")
    worst_k: float = float("nan")
    n_samples: int = 0
    note: str = ""
    fitted: dict = field(default_factory=dict)

    def to_row(self) -> dict:
        return {
            "id": self.id,
            "regime": self.regime,
            "worst_t": self.worst_t,
            "worst_k": self.worst_k,
            "ratio": self.worst_ratio,
            "constant": self.constant,
            "pass": self.passed,
        }


def regime_of(k: float) -> str:
    if k > 2:
        return "real_distinct"
    if k == 2:
        return "degenerate"
    return "complex_pair"


def eigenvalues(k: float) -> EigenPair:
    """Roots of X^2 + k^2 X + k^2, labelled as in the multiplier formulas."""
    k = float(k)
    if k < 0:
        raise ValueError(f"wavenumber must be nonnegative, got {k}")
    if k > 2:
        xi = math.sqrt((k - 2) * (k + 2)) / k
        return EigenPair(complex(-2.0 / (1.0 + xi)), complex(-(1.0 + xi) * k * k / 2), "real_distinct", xi)
    if k == 2:
        return EigenPair(-2.0 + 0j, -2.0 + 0j, "degenerate", 0.0)
    if k == 0:
        return EigenPair(0j, 0j, "complex_pair", math.inf)
    theta = math.sqrt((2 - k) * (2 + k)) / k
    half = k * k / 2
    return EigenPair(complex(-half, -theta * half), complex(-half, theta * half), "complex_pair", theta)


# ---------------------------------------------------------------- stable kernels


def _phi1_neg(z: np.ndarray) -> np.ndarray:
    """(1 - exp(-z)) / z for z >= 0."""
    out = np.empty_like(z)
    small = np.abs(z) < SERIES_CUTOFF
    zs = z[small]
    out[small] = 1.0 - zs / 2 + zs**2 / 6 - zs**3 / 24
    zl = z[~small]
    out[~small] = -np.expm1(-zl) / zl
    return out


def _sinc(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    small = np.abs(x) < SERIES_CUTOFF
    xs = x[small] ** 2
    out[small] = 1.0 - xs / 6 + xs**2 / 120 - xs**3 / 5040
    xl = x[~small]
    out[~small] = np.sin(xl) / xl
    return out


def _real_branch(t, k):
    """Components for k > 2: (omega1, omega2, m1, m2/k, series flag)."""
    xi = np.sqrt((k - 2) * (k + 2)) / k
    lp = -2.0 / (1.0 + xi)
    lm = -(1.0 + xi) * k * k / 2
    ep = np.exp(t * lp)
    em = np.exp(t * lm)
    z = t * k * k * xi
    f = _phi1_neg(z)
    om1 = 0.5 * (ep + em)
    om2 = ep * (t * k * k / 2) * f
    m2k = ep * (t * k / 2) * f
    with np.errstate(divide="ignore", invalid="ignore"):
        m1_high = em * (1.0 + xi) / (2.0 * xi) - ep * 2.0 / (k * k * xi * (1.0 + xi))
    m1 = np.where(k >= 4, m1_high, om1 - om2)
    return om1, om2, m1, m2k, np.abs(z) < SERIES_CUTOFF


def _complex_branch(t, k):
    """Components for 0 < k < 2: (omega3, omega4, m1, m2/k, series flag)."""
    theta_k = np.sqrt((2 - k) * (2 + k))  # Theta * k
    x = t * k * theta_k / 2
    e = np.exp(-t * k * k / 2)
    s = _sinc(x)
    om3 = e * np.cos(x)
    om4 = e * (t * k * k / 2) * s
    m2k = e * (t * k / 2) * s
    return om3, om4, om3 - om4, m2k, np.abs(x) < SERIES_CUTOFF


def _evaluate(t, k):
    t, k = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(k, dtype=float))
    t = t.ravel()
    k = k.ravel()
    if np.any(t < 0) or np.any(k < 0):
        raise ValueError("time and wavenumber must be nonnegative")
    n = t.size
    out = {
        name: np.full(n, np.nan)
        for name in ("m1", "m2", "m2k", "om1", "om2", "om3", "om4")
    }
    out["series"] = np.zeros(n, dtype=bool)

    zero = k == 0
    out["m1"][zero], out["m2"][zero], out["m2k"][zero] = 1.0, 0.0, 0.0

    cx = (k > 0) & (k < 2)
    if np.any(cx):
        om3, om4, m1, m2k, ser = _complex_branch(t[cx], k[cx])
        out["om3"][cx], out["om4"][cx] = om3, om4
        out["m1"][cx], out["m2"][cx], out["m2k"][cx] = m1, om4, m2k
        out["series"][cx] = ser

    dg = k == 2
    if np.any(dg):
        td = t[dg]
        e = np.exp(-2 * td)
        out["m1"][dg] = e - 2 * td * e
        out["m2"][dg] = 2 * td * e
        out["m2k"][dg] = td * e
        out["om1"][dg] = out["om3"][dg] = e
        out["om2"][dg] = out["om4"][dg] = 2 * td * e

    rl = k > 2
    if np.any(rl):
        om1, om2, m1, m2k, ser = _real_branch(t[rl], k[rl])
        out["om1"][rl], out["om2"][rl] = om1, om2
        out["m1"][rl], out["m2"][rl], out["m2k"][rl] = m1, om2, m2k
        out["series"][rl] = ser

    t0 = t == 0
    out["m1"][t0], out["m2"][t0], out["m2k"][t0] = 1.0, 0.0, 0.0
    return out


def multipliers(t, k):
    """Vectorized ``(m1, m2, m2/k)`` at broadcast ``(t, k)``."""
    shape = np.broadcast_shapes(np.shape(t), np.shape(k))
    ev = _evaluate(t, k)
    return (
        ev["m1"].reshape(shape),
        ev["m2"].reshape(shape),
        ev["m2k"].reshape(shape),
    )


def omegas(t, k) -> dict:
    """The regime-wise building blocks Omega_1..Omega_4 (NaN off-regime)."""
    shape = np.broadcast_shapes(np.shape(t), np.shape(k))
    ev = _evaluate(t, k)
    return {name: ev[f"om{i}"].reshape(shape) for i, name in enumerate(("omega1", "omega2", "omega3", "omega4"), 1)}


def m12(t: float, k: float) -> MultiplierSample:
    ev = _evaluate(t, k)
    return MultiplierSample(
        t=float(t),
        k=float(k),
        m1=float(ev["m1"][0]),
        m2=float(ev["m2"][0]),
        regime=regime_of(float(k)),
        stable_branch=bool(ev["series"][0]),
    )


def propagator(t, k) -> np.ndarray:
    """exp(t L(k)) assembled from the multipliers, shape ``(..., 2, 2)``."""
    m1, m2, m2k = multipliers(t, k)
    out = np.empty(m1.shape + (2, 2))
    out[..., 0, 0] = m1
    out[..., 0, 1] = 2 * m2k
    out[..., 1, 0] = -2 * m2k
    out[..., 1, 1] = m1 + 2 * m2
    return out


def m1_symbol_derivative(kt: int, alpha, t: float, xi) -> float:
    """``d^kt/dt^kt (xi^alpha m1(t, xi))`` from the two-exponential form.

    Only valid where |xi| > 4, where m1 is a combination of the slow mode
    ``exp(-2t/(1+Xi))`` and the fast mode ``exp(-t(1+Xi)|xi|^2/2)``.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    alpha = np.atleast_1d(np.asarray(alpha, dtype=int))
    if kt < 0 or np.any(alpha < 0) or alpha.sum() > 2:
        raise ValueError("need kt >= 0 and a multi-index with |alpha| <= 2")
    if alpha.size != xi.size:
        raise ValueError("alpha and xi must have the same length")
    r = float(np.sqrt(np.sum(xi**2)))
    if r <= 4:
        raise ValueError(f"derivative formula requires |xi| > 4, got {r}")
    big_xi = math.sqrt((r - 2) * (r + 2)) / r
    xa = float(np.prod(xi**alpha))
    fast = (
        -((1 + big_xi) ** (kt + 1)) / ((-2.0) ** (kt + 1) * big_xi)
        * r ** (2 * kt) * xa * math.exp(-t * (1 + big_xi) * r * r / 2)
    )
    slow = (
        (-2.0) ** (kt + 1) / (big_xi * (1 + big_xi) ** (kt + 1))
        * xa / (r * r) * math.exp(-2 * t / (1 + big_xi))
    )
    return fast + slow


# ---------------------------------------------------------------- application


def apply_linear_array(p_hat: np.ndarray, q_hat: np.ndarray, kmag: np.ndarray, t: float):
    """Propagate coefficient arrays by time ``t`` (zero mode must be zero)."""
    m1, m2, m2k = multipliers(t, kmag)
    p = m1 * p_hat + 2 * m2k * q_hat
    q = -2 * m2k * p_hat + (m1 + 2 * m2) * q_hat
    return p, q


def _require_mean_free(f: SpectralField, name: str, rtol: float = 1e-10):
    z = abs(f.zero_mode)
    scale = float(np.max(np.abs(f.coeffs), initial=0.0))
    if z > rtol * max(scale, 1e-300) and z > 1e-300:
        raise ValueError(f"{name} must be mean-free (zero mode {z:.3e})")


def apply_linear(p0: SpectralField, q0: SpectralField, t: float):
    if t < 0:
        raise ValueError("t must be nonnegative")
    _check_grid(p0.grid, q0.grid)
    _require_mean_free(p0, "p0")
    _require_mean_free(q0, "q0")
    g = p0.grid
    pc = p0.coeffs.copy()
    qc = q0.coeffs.copy()
    pc[g.zero_index] = 0.0
    qc[g.zero_index] = 0.0
    p, q = apply_linear_array(pc, qc, g.kmag, t)
    return p0.with_coeffs(p), q0.with_coeffs(q)


# ---------------------------------------------------------------- certification


def default_samples():
    """Log-spaced sample sets: t at 32/decade on [1e-3, 50], k at 64/decade on
    [1e-3, 1e3], plus the regime boundaries and a cluster around k = 2."""
    t = np.logspace(-3, math.log10(50.0), int(round(32 * (math.log10(50.0) + 3))) + 1)
    k = np.logspace(-3, 3, 64 * 6 + 1)
    near = 2 + np.concatenate([-np.logspace(-10, -2, 17), np.logspace(-10, -2, 17)])
    extra = [1.0, 2.0, 4.0, 2.0**4, 2.0**5, 4 + 1e-12, 1 - 1e-12]
    k = np.unique(np.concatenate([k, near, extra]))
    return t, k


def _worst(ratio, T, K):
    j = int(np.nanargmax(ratio))
    return float(ratio.flat[j]), float(T.flat[j]), float(K.flat[j])


def _explicit_report(rid, regime, domain, value, shape, constant, T, K):
    sel = np.isfinite(value)
    if not np.any(sel):
        return BoundReport(rid, regime, domain, float("nan"), constant, False, note="insufficient regime coverage")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.abs(value[sel]) / shape[sel]
    w, wt, wk = _worst(ratio, T[sel], K[sel])
    passed = bool(w <= constant + ROUND_OFF_SLACK)
    return BoundReport(rid, regime, domain, w, constant, passed, wt, wk, int(sel.sum()))


def _fitted_report(rid, regime, domain, lhs, envelope, T, K, c_candidates, c_report):
    if lhs.size == 0:
        return BoundReport(rid, regime, domain, float("nan"), float("nan"), False, note="insufficient regime coverage")
    fitted = {}
    worst = None
    for c in c_candidates:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.abs(lhs) / envelope(c)
        w, wt, wk = _worst(ratio, T, K)
        fitted[float(c)] = w
        if c == c_report:
            worst = (w, wt, wk)
    w, wt, wk = worst
    return BoundReport(
        rid, regime, domain, w, w, bool(np.isfinite(w)), wt, wk, int(lhs.size),
        note=f"fitted c1 at c={c_report}", fitted=fitted,
    )


def certify_bounds(
    t_samples=None,
    k_samples=None,
    limit_offsets=(1e-6,),
    limit_times=None,
    limit_tol=1e-6,
    c_candidates=DECAY_C_CANDIDATES,
    c_report=DECAY_C,
) -> list[BoundReport]:
    """Check the explicit regime bounds and fit the existence-type ones.

    Explicit bounds are checked with their printed constants plus a 1e-9
    round-off slack.  For the bounds that only assert existence of
    ``(c, c1)``, the smallest working ``c1`` is fitted for each candidate
    ``c`` and stored in ``BoundReport.fitted``.
    """
    if t_samples is None or k_samples is None:
        t0, k0 = default_samples()
        t_samples = t0 if t_samples is None else t_samples
        k_samples = k0 if k_samples is None else k_samples
    t_samples = np.asarray(t_samples, dtype=float)
    k_samples = np.asarray(k_samples, dtype=float)
    T, K = np.meshgrid(t_samples, k_samples, indexing="ij")
    ev = _evaluate(T, K)
    m1 = ev["m1"].reshape(T.shape)
    m2 = ev["m2"].reshape(T.shape)
    om = {i: ev[f"om{i}"].reshape(T.shape) for i in range(1, 5)}
    reports: list[BoundReport] = []

    def region(mask):
        return np.where(mask, 1.0, np.nan)

    hi = region(K > 4)
    mid = region((K > 2) & (K <= 4))
    cup = region((K >= 1) & (K < 2))
    clo = region((K > 0) & (K < 1))

    reports.append(_explicit_report(
        "real-high:m1", "real_distinct", "|xi|>4", (om[1] - om[2]) * hi,
        2 * np.exp(-T * K**2 / 2) + 3 * np.exp(-T) / (1 + K**2), 1.0, T, K))
    reports.append(_explicit_report("real-high:om2", "real_distinct", "|xi|>4", om[2] * hi, np.exp(-T), 1.0, T, K))
    reports.append(_explicit_report("real-mid:om1", "real_distinct", "2<|xi|<=4", om[1] * mid, np.exp(-T), 1.0, T, K))
    reports.append(_explicit_report("real-mid:om2", "real_distinct", "2<|xi|<=4", om[2] * mid, np.exp(-T / 2), 16.0, T, K))
    with np.errstate(divide="ignore", invalid="ignore"):
        reports.append(_explicit_report("complex-mid:om4/k", "complex_pair", "1<=|xi|<2", om[4] / K * cup, np.exp(-T / 4), 4.0, T, K))
        reports.append(_explicit_report("complex-mid:om4", "complex_pair", "1<=|xi|<2", om[4] * cup, np.exp(-T / 4), 8.0, T, K))
        reports.append(_explicit_report("complex-mid:om3", "complex_pair", "1<=|xi|<2", om[3] * cup, np.exp(-T / 2), 1.0, T, K))
        reports.append(_explicit_report("complex-low:om4/k", "complex_pair", "|xi|<1", om[4] / K * clo, np.exp(-T * K**2 / 2), 1.0, T, K))
        reports.append(_explicit_report("complex-low:om4", "complex_pair", "|xi|<1", om[4] * clo, np.exp(-T * K**2 / 4), 4.0, T, K))
        reports.append(_explicit_report("complex-low:om3", "complex_pair", "|xi|<1", om[3] * clo, np.exp(-T * K**2 / 2), 2.0, T, K))

    # degenerate point: the k == 2 branch must equal the limit formulas exactly
    td = t_samples
    deg = _evaluate(td, np.full_like(td, 2.0))
    e2 = np.exp(-2 * td)
    err_deg = np.maximum(np.abs(deg["m1"] - (e2 - 2 * td * e2)), np.abs(deg["m2"] - 2 * td * e2))
    j = int(np.argmax(err_deg))
    reports.append(BoundReport(
        "degenerate-exact", "degenerate", "|xi|=2", float(err_deg[j]), 0.0,
        bool(err_deg[j] == 0.0), float(td[j]), 2.0, td.size))

    # one-sided limits |xi| -> 2+ and 2-
    tl = td if limit_times is None else np.asarray(limit_times, dtype=float)
    errs = []
    for d in limit_offsets:
        for kk in (2 + d, 2 - d):
            ev_l = _evaluate(tl, np.full_like(tl, kk))
            el = np.exp(-2 * tl)
            first = ev_l["om1"] if kk > 2 else ev_l["om3"]
            second = ev_l["om2"] if kk > 2 else ev_l["om4"]
            e = np.maximum(np.abs(first - el), np.abs(second - 2 * tl * el))
            i = int(np.argmax(e))
            errs.append((float(e[i]), float(tl[i]), kk))
    worst = max(errs)
    reports.append(BoundReport(
        "degenerate-limit", "degenerate", "|xi|->2", worst[0], float(limit_tol),
        bool(worst[0] <= limit_tol), worst[1], worst[2], len(errs) * tl.size,
        note=f"offsets {list(limit_offsets)}"))

    # existence-type bounds with fitted constants
    sel = K > 2**4
    lhs1 = np.abs(m1[sel])
    Ts, Ks = T[sel], K[sel]
    reports.append(_fitted_report(
        "fit-high:m1", "real_distinct", "|xi|>2^4", lhs1,
        lambda c: np.exp(-c * Ts * Ks**2) + np.exp(-c * Ts) / (1 + Ks**2), Ts, Ks, c_candidates, c_report))
    reports.append(_fitted_report(
        "fit-high:m2", "real_distinct", "|xi|>2^4", np.abs(m2[sel]),
        lambda c: np.exp(-c * Ts), Ts, Ks, c_candidates, c_report))
    sel = (K > 1) & (K < 2**5)
    T2, K2 = T[sel], K[sel]
    reports.append(_fitted_report(
        "fit-mid:m1+m2", "mixed", "1<|xi|<2^5", np.abs(m1[sel]) + np.abs(m2[sel]),
        lambda c: np.exp(-c * T2), T2, K2, c_candidates, c_report))
    sel = (K > 0) & (K < 2)
    T3, K3 = T[sel], K[sel]
    lhs3 = np.abs(m1[sel]) + np.abs(m2[sel]) + np.abs(m2[sel]) / K3
    reports.append(_fitted_report(
        "fit-low:m1+m2", "complex_pair", "|xi|<2", lhs3,
        lambda c: np.exp(-c * T3 * K3**2), T3, K3, c_candidates, c_report))

    # coverage of every regime the bounds rely on
    needs = {
        "|xi|>4": np.any(k_samples > 4),
        "2<|xi|<=4": np.any((k_samples > 2) & (k_samples <= 4)),
        "1<=|xi|<2": np.any((k_samples >= 1) & (k_samples < 2)),
        "|xi|<1": np.any((k_samples > 0) & (k_samples < 1)),
        "|xi|->2+": np.any((k_samples > 2) & (k_samples < 2 + 1e-3)),
        "|xi|->2-": np.any((k_samples < 2) & (k_samples > 2 - 1e-3)),
    }
    missing = [name for name, ok in needs.items() if not ok]
    reports.append(BoundReport(
        "coverage", "all", "regimes", float(len(missing)), 0.0, not missing,
        n_samples=int(T.size), note="missing: " + ", ".join(missing) if missing else "complete"))
    return reports


def certify_smoothing(t_samples=None, k_samples=None) -> list[BoundReport]:
    """Fit the constants of the high-frequency smoothing estimates.

    For ``|xi| > 4`` the derivative symbol splits into a fast heat-like term
    bounded by ``C1 t^(-|alpha|/2 - kt)`` and a slow damped term bounded by
    ``C2 exp(-t)``.  Each constant is fitted from its own term; the report
    then checks the full symbol against the fitted envelope.  The ``m2``
    estimate is only uniform in time for ``kt = 0`` and is checked there.
    """
    if t_samples is None:
        t_samples = np.logspace(-3, math.log10(50.0), 150)
    if k_samples is None:
        k_samples = np.logspace(math.log10(4.0) + 1e-9, 3, 256)
    T, K = np.meshgrid(np.asarray(t_samples, float), np.asarray(k_samples, float), indexing="ij")
    big_xi = np.sqrt((K - 2) * (K + 2)) / K
    reports = []
    for kt in (0, 1, 2):
        for a in (0, 1, 2):
            fast = (
                -((1 + big_xi) ** (kt + 1)) / ((-2.0) ** (kt + 1) * big_xi)
                * K ** (2 * kt + a) * np.exp(-T * (1 + big_xi) * K**2 / 2)
            )
            slow = (-2.0) ** (kt + 1) / (big_xi * (1 + big_xi) ** (kt + 1)) * K ** (a - 2.0) * np.exp(-2 * T / (1 + big_xi))
            power = a / 2 + kt
            c1 = float(np.max(np.abs(fast) * T**power))
            c2 = float(np.max(np.abs(slow) * np.exp(T)))
            env = c1 * T ** (-power) + c2 * np.exp(-T)
            ratio = np.abs(fast + slow) / env
            w, wt, wk = _worst(ratio, T, K)
            reports.append(BoundReport(
                f"symbol-m1[kt={kt},|a|={a}]", "real_distinct", "|xi|>4", w, 1.0,
                bool(w <= 1 + ROUND_OFF_SLACK), wt, wk, int(T.size),
                fitted={"C1": c1, "C2": c2}))
    _, m2, _ = multipliers(T, K)
    c3 = float(np.max(np.abs(m2)))
    reports.append(BoundReport(
        "symbol-m2[kt=0]", "real_distinct", "|xi|>4", c3, c3, bool(np.isfinite(c3)),
        n_samples=int(T.size), fitted={"C3": c3}))
    return reports


# ---------------------------------------------------------------- weighted decay

SUP_K_MAX = 2.0**7


def _tail_sup(t: float, s: float, which: str) -> float:
    """Bound on sup_{k > 2^7} k^s |m(t, k)| from the explicit high-k bounds
    and the fact that the propagator is an l2 contraction (|m| <= 1)."""
    if which == "m2":
        if s > 0:
            return math.inf
        return min(1.0, math.exp(-t))
    kk = np.logspace(math.log10(SUP_K_MAX), 12, 64 * 10 + 1)
    kstar = math.sqrt(s / t) if s > 0 else 0.0
    if kstar > SUP_K_MAX:
        kk = np.append(kk, kstar)
    env = np.minimum(1.0, 2 * np.exp(-t * kk**2 / 2) + 3 * math.exp(-t) / (1 + kk**2))
    tail = float(np.max(kk**s * env))
    if s >= 2:
        tail = max(tail, 3 * math.exp(-t))
    return tail


def sup_weighted_decay(t: float, s: float, which: str = "m1", points_per_decade: int = 64) -> float:
    """sup over k in (0, 2^7] of k^s |m(t, k)|, combined with a rigorous tail
    bound for larger k.  Returns ``inf`` for ``m2`` with ``s > 0``: that
    multiplier does not decay in k."""
    if not t > 0:
        raise ValueError("t must be positive")
    if not 0 <= s <= 2:
        raise ValueError("s must lie in [0, 2]")
    if which not in ("m1", "m2"):
        raise ValueError("which must be 'm1' or 'm2'")
    decades = math.log10(SUP_K_MAX) + 4
    k = np.logspace(-4, math.log10(SUP_K_MAX), int(points_per_decade * decades) + 1)
    k = np.append(k, 2.0)
    m1, m2, _ = multipliers(t, k)
    m = m1 if which == "m1" else m2
    grid_sup = float(np.max(k**s * np.abs(m)))
    return max(grid_sup, _tail_sup(t, s, which))


@dataclass
class DecayFit:
    s: float
    t: np.ndarray
    sup: np.ndarray
    exponent: float
    intercept_C: float
    envelope_C: float

    @property
    def expected_exponent(self) -> float:
        return -self.s / 2


def fit_weighted_decay(s: float, t_range=(1e-2, 1.0), n_t: int = 41, which: str = "m1") -> DecayFit:
    """Least-squares slope of log sup_k k^s |m| against log t over ``t_range``.

    ``intercept_C`` is the fitted prefactor and ``envelope_C`` the smallest
    ``C`` with ``sup <= C t^{-s/2}`` at every sampled time.
    """
    t = np.logspace(math.log10(t_range[0]), math.log10(t_range[1]), n_t)
    sup = np.array([sup_weighted_decay(float(x), s, which) for x in t])
    res = stats.linregress(np.log(t), np.log(sup))
    return DecayFit(float(s), t, sup, float(res.slope), float(math.exp(res.intercept)), float(np.max(sup * t ** (s / 2))))
