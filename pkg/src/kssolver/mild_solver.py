"""Nonlinear term, Duhamel fixed point, exponential time stepping and the
(u, v) <-> (p, q) change of variables.

Evolved system (mean-free, normalized density)::

    dp/dt = Delta p + Lambda q - Lambda G,     dq/dt = -Lambda p,
    G = Lambda^{-1} div(p grad Lambda^{-1} q)

Per mode the Duhamel form is::

    p(t) = m1 p0 + 2 (m2/k) q0 - int_0^t m1(t - s) k G(s) ds
    q(t) = -2 (m2/k) p0 + (m1 + 2 m2) q0 + 2 int_0^t m2(t - s) G(s) ds
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from . import spectral_core as sc
from .semigroup import apply_linear_array, multipliers
from .spectral_core import FrequencyGrid, SpectralField, PhysicalField

log = logging.getLogger(__name__)

__all__ = [
    "ModelParams",
    "SolutionState",
    "SolutionTrace",
    "PicardReport",
    "ContractionError",
    "SmallnessError",
    "compute_G",
    "compute_G_array",
    "data_norm",
    "xy_norms",
    "linear_trace",
    "picard_solve",
    "etd_march",
    "duhamel_residual",
    "uv_to_pq",
    "pq_to_uv",
    "infer_params",
]

DEFAULT_EPS0 = 1e-2
SMOOTHING_ORDER = 7 / 4
MEAN_RTOL = 1e-10


@dataclass(frozen=True)
class ModelParams:
    mu: float = 1.0
    u_bar: float = 1.0
    c_gauge: float = 1.0

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError("mu must be nonnegative")
        if not self.u_bar > 0:
            raise ValueError("u_bar must be positive")
        if not self.c_gauge > 0:
            raise ValueError("c_gauge must be positive")

    @property
    def v_rate(self) -> float:
        """Exponential growth rate of the v amplitude, u_bar - mu."""
        return self.u_bar - self.mu


@dataclass(frozen=True)
class SolutionState:
    t: float
    p: SpectralField
    q: SpectralField


@dataclass
class SolutionTrace:
    """Stacked states: ``p[i]`` and ``q[i]`` are the coefficients at ``times[i]``."""

    grid: FrequencyGrid
    times: np.ndarray
    p: np.ndarray
    q: np.ndarray
    G: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.ndim != 1 or self.times.size == 0:
            raise ValueError("trace needs a nonempty 1-D time array")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        want = (self.times.size,) + self.grid.shape
        for name in ("p", "q"):
            if getattr(self, name).shape != want:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {want}")
        if self.G is not None and self.G.shape != want:
            raise ValueError("G cache shape mismatch")

    def __len__(self) -> int:
        return self.times.size

    def state(self, i: int) -> SolutionState:
        return SolutionState(
            float(self.times[i]),
            SpectralField(self.grid, self.p[i]),
            SpectralField(self.grid, self.q[i]),
        )

    def final(self) -> SolutionState:
        return self.state(len(self) - 1)

    def states(self):
        for i in range(len(self)):
            yield self.state(i)


@dataclass
class PicardReport:
    iterations: int = 0
    distances: list = field(default_factory=list)
    ratios: list = field(default_factory=list)
    converged: bool = False
    residual: float = float("nan")
    data_norm: float = float("nan")
    smallness_ok: bool = True
    message: str = ""

    @property
    def max_ratio(self) -> float:
        return max(self.ratios) if self.ratios else 0.0

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "distances": list(map(float, self.distances)),
            "ratios": list(map(float, self.ratios)),
            "converged": self.converged,
            "residual": float(self.residual),
            "data_norm": float(self.data_norm),
            "smallness_ok": self.smallness_ok,
            "message": self.message,
        }


class ContractionError(RuntimeError):
    def __init__(self, message: str, report: PicardReport):
        super().__init__(message)
        self.report = report


class SmallnessError(ValueError):
    pass


# ---------------------------------------------------------------- nonlinearity


def _require_mean_free(coeffs: np.ndarray, grid: FrequencyGrid, name: str):
    z = np.abs(coeffs[grid.zero_index])
    scale = float(np.max(np.abs(coeffs), initial=0.0))
    if np.any(z > MEAN_RTOL * scale) and np.any(z > 1e-300):
        raise ValueError(f"{name} must be mean-free (max zero mode {float(np.max(z)):.3e})")


def _riesz_vector(grid: FrequencyGrid):
    """Symbols ``i xi_j / |xi|`` with Nyquist modes removed."""
    keep = ~grid.nyquist_mask
    return [1j * kj * grid.kmag_inv * keep for kj in grid.wavevector]


def _chunk_len(grid: FrequencyGrid, batch: int, budget: int = 2**22) -> int:
    return max(1, min(batch, budget // max(grid.size, 1)))


def compute_G_array(p_hat, q_hat, grid: FrequencyGrid, project: bool = True, split: bool = False):
    """Pseudo-spectral G for coefficient arrays with optional leading batch axes.

    With ``project=True`` the inputs must be mean-free and their zero modes
    are discarded; ``project=False`` keeps the zero mode of ``p`` (used to
    test the constant-``p`` identity ``G = -c q``).  With ``split=True`` the
    pair ``(A, B)`` with ``Lambda G = A + B``, ``A = grad p . grad Lambda^{-1} q``
    and ``B = -p Lambda q`` is returned as well.
    """
    p_hat = np.asarray(p_hat)
    q_hat = np.asarray(q_hat)
    if p_hat.shape != q_hat.shape or p_hat.shape[p_hat.ndim - grid.dim:] != grid.shape:
        raise ValueError("p and q must share the grid shape")
    mask = grid.dealias_mask
    if project:
        _require_mean_free(p_hat, grid, "p")
        _require_mean_free(q_hat, grid, "q")
    batch_shape = p_hat.shape[: p_hat.ndim - grid.dim]
    pf = p_hat.reshape((-1,) + grid.shape)
    qf = q_hat.reshape((-1,) + grid.shape)
    out = np.empty(pf.shape, dtype=complex)
    outA = np.empty(pf.shape, dtype=complex) if split else None
    outB = np.empty(pf.shape, dtype=complex) if split else None
    rv = _riesz_vector(grid)
    step = _chunk_len(grid, pf.shape[0], budget=2**21)
    for a in range(0, pf.shape[0], step):
        pc = pf[a : a + step] * mask
        qc = qf[a : a + step] * mask
        if project:
            pc[grid.zero_index] = 0.0
            qc[grid.zero_index] = 0.0
        P = sc.ifft_array(pc, grid).real
        acc = np.zeros(pc.shape, dtype=complex)
        for r in rv:
            w = sc.ifft_array(r * qc, grid).real
            acc += r * (sc.fft_array(P * w, grid) * mask)
        acc[grid.zero_index] = 0.0
        out[a : a + step] = acc
        if split:
            keep = ~grid.nyquist_mask
            A = np.zeros(pc.shape, dtype=complex)
            for kj, r in zip(grid.wavevector, rv):
                dp = sc.ifft_array(1j * kj * keep * pc, grid).real
                dl = sc.ifft_array(1j * kj * keep * grid.kmag_inv * qc, grid).real
                A += sc.fft_array(dp * dl, grid)
            B = -sc.fft_array(P * sc.ifft_array(grid.kmag * qc, grid).real, grid)
            outA[a : a + step] = A * mask
            outB[a : a + step] = B * mask
    G = out.reshape(batch_shape + grid.shape)
    if split:
        return G, outA.reshape(G.shape), outB.reshape(G.shape)
    return G


def compute_G(p: SpectralField, q: SpectralField, project: bool = True, split: bool = False):
    sc._check_grid(p.grid, q.grid)
    res = compute_G_array(p.coeffs, q.coeffs, p.grid, project=project, split=split)
    if split:
        return tuple(p.with_coeffs(r) for r in res)
    return p.with_coeffs(res)


# ---------------------------------------------------------------- norms


def data_norm(p0: SpectralField, q0: SpectralField) -> float:
    """``||p0||_{L2} + ||q0||_{H1}``."""
    return sc.norm(p0, "L2") + sc.norm(q0, "H", 1.0)


def trapezoid_weights(times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    w = np.zeros_like(t)
    if t.size > 1:
        d = np.diff(t)
        w[:-1] += d / 2
        w[1:] += d / 2
    return w


def xy_norms(p, q, grid: FrequencyGrid, times, s_psi: float = SMOOTHING_ORDER):
    """Discrete resolution-space norms of stacked coefficient arrays.

    X: sup_t ||p||_{L2} + (int ||p||_{H1dot}^2)^{1/2} + int ||p||_{H^s_psi}
    Y: sup_t ||q||_{H1} + (int ||q||_{H1dot}^2)^{1/2}
    Time integrals use trapezoid weights on ``times``.
    """
    w = trapezoid_weights(times)
    x = (
        float(np.max(sc.norm_array(p, grid, "L2")))
        + math.sqrt(float(np.sum(w * sc.norm_array(p, grid, "Hdot", 1.0) ** 2)))
        + float(np.sum(w * sc.norm_array(p, grid, "Hpsi", s_psi)))
    )
    y = (
        float(np.max(sc.norm_array(q, grid, "H", 1.0)))
        + math.sqrt(float(np.sum(w * sc.norm_array(q, grid, "Hdot", 1.0) ** 2)))
    )
    return x, y


# ---------------------------------------------------------------- Duhamel machinery


def _multiplier_tables(grid: FrequencyGrid, lags: np.ndarray):
    t = lags.reshape((-1,) + (1,) * grid.dim)
    return multipliers(t, grid.kmag[None])


def linear_trace(p0: np.ndarray, q0: np.ndarray, grid: FrequencyGrid, times) -> tuple[np.ndarray, np.ndarray]:
    times = np.asarray(times, dtype=float)
    m1, m2, m2k = _multiplier_tables(grid, times)
    p = m1 * p0 + 2 * m2k * q0
    q = -2 * m2k * p0 + (m1 + 2 * m2) * q0
    return p, q


def _causal_trapezoid(M: np.ndarray, F: np.ndarray, dt: float) -> np.ndarray:
    """``D_i = dt * trapz_j M_{i-j} F_j`` over ``j = 0..i`` for every lag ``i``."""
    nt = M.shape[0]
    Mf = M.reshape(nt, -1)
    Ff = F.reshape(nt, -1)
    out = np.empty(Ff.shape, dtype=complex)
    step = max(1, 2**21 // nt)
    for a in range(0, Ff.shape[1], step):
        m = Mf[:, a : a + step]
        f = Ff[:, a : a + step]
        C = fftconvolve(m, f, axes=0)[:nt]
        out[:, a : a + step] = dt * (C - 0.5 * m * f[:1] - 0.5 * m[:1] * f)
    return out.reshape(F.shape)


def _duhamel(tables, kmag, G, dt):
    m1, m2, _ = tables
    dp = -_causal_trapezoid(m1, kmag * G, dt)
    dq = 2.0 * _causal_trapezoid(m2, G, dt)
    return dp, dq


def duhamel_residual(trace: SolutionTrace) -> float:
    """X x Y distance between a trace and the right-hand side evaluated on it.

    Requires uniform time spacing starting at 0.
    """
    g = trace.grid
    times = trace.times
    dt = _uniform_step(times)
    tables = _multiplier_tables(g, times - times[0])
    lp, lq = linear_trace(trace.p[0], trace.q[0], g, times - times[0])
    G = compute_G_array(trace.p, trace.q, g)
    dp, dq = _duhamel(tables, g.kmag, G, dt)
    x, y = xy_norms(lp + dp - trace.p, lq + dq - trace.q, g, times)
    return x + y


def _uniform_step(times: np.ndarray) -> float:
    d = np.diff(times)
    if d.size == 0:
        return 0.0
    if np.max(np.abs(d - d[0])) > 1e-12 * max(1.0, abs(times[-1])):
        raise ValueError("Duhamel quadrature needs a uniform time grid")
    return float(d[0])


def _smallness_gate(p0, q0, eps0, mode):
    eps = data_norm(p0, q0)
    ok = eps <= eps0 * (1 + 1e-12)
    if not ok:
        msg = f"data norm {eps:.4e} exceeds smallness threshold {eps0:.4e}"
        if mode == "strict":
            raise SmallnessError(msg)
        log.warning(msg)
    return eps, ok


def picard_solve(
    p0: SpectralField,
    q0: SpectralField,
    T: float,
    n_t: int,
    tol: float = 1e-12,
    nonlinear: bool = True,
    mode: str = "strict",
    eps0: float = DEFAULT_EPS0,
    max_iter: int = 60,
    keep_G: bool = True,
) -> tuple[SolutionTrace, PicardReport]:
    """Picard iteration of the Duhamel map on a uniform grid of ``n_t`` steps.

    Starts from the linear solution; each sweep recomputes G at every stored
    time and applies the composite trapezoid rule with exact multipliers.
    Stops once the X x Y distance of consecutive iterates falls below
    ``tol``; three consecutive ratios >= 1 abort with ``ContractionError``.
    """
    sc._check_grid(p0.grid, q0.grid)
    g = p0.grid
    if not T > 0:
        raise ValueError("T must be positive")
    if n_t < 8:
        raise ValueError("n_t must be at least 8")
    if mode not in ("strict", "research"):
        raise ValueError("mode must be 'strict' or 'research'")
    _require_mean_free(p0.coeffs, g, "p0")
    _require_mean_free(q0.coeffs, g, "q0")
    pc = p0.coeffs.copy()
    qc = q0.coeffs.copy()
    pc[g.zero_index] = 0.0
    qc[g.zero_index] = 0.0

    report = PicardReport()
    report.data_norm, report.smallness_ok = _smallness_gate(p0, q0, eps0, mode)

    times = np.linspace(0.0, T, n_t + 1)
    dt = T / n_t
    tables = _multiplier_tables(g, times)
    lp, lq = linear_trace(pc, qc, g, times)
    p, q = lp, lq
    G = None
    meta = {"method": "picard", "n_t": n_t, "tol": tol, "nonlinear": nonlinear}

    if not nonlinear:
        report.iterations = 1
        report.converged = True
        report.residual = 0.0
        report.message = "linear"
        return SolutionTrace(g, times, p, q, None, meta), report

    bad = 0
    for it in range(1, max_iter + 1):
        G = compute_G_array(p, q, g)
        dp, dq = _duhamel(tables, g.kmag, G, dt)
        pn, qn = lp + dp, lq + dq
        x, y = xy_norms(pn - p, qn - q, g, times)
        d = x + y
        report.distances.append(d)
        if len(report.distances) > 1:
            prev = report.distances[-2]
            r = d / prev if prev > 0 else 0.0
            report.ratios.append(r)
            bad = bad + 1 if r >= 1 else 0
        p, q = pn, qn
        report.iterations = it
        if not np.isfinite(d):
            raise ContractionError("Picard iterate became non-finite", report)
        if bad >= 3:
            report.message = "three consecutive non-contracting iterations"
            raise ContractionError(report.message, report)
        if d < tol:
            report.converged = True
            break
    G = compute_G_array(p, q, g)
    dp, dq = _duhamel(tables, g.kmag, G, dt)
    x, y = xy_norms(lp + dp - p, lq + dq - q, g, times)
    report.residual = x + y
    report.message = "converged" if report.converged else f"not converged after {max_iter} iterations"
    return SolutionTrace(g, times, p, q, G if keep_G else None, meta), report


# ---------------------------------------------------------------- exponential stepping


def _check_finite(y: np.ndarray, grid: FrequencyGrid, t: float, name: str):
    if not np.all(np.isfinite(y)):
        idx = np.argwhere(~np.isfinite(y))[0]
        mode = tuple(int(grid.mode_index[i]) for i in idx)
        raise FloatingPointError(f"non-finite {name} at t={t:.6g}, mode index {mode}")


def etd_march(
    p0: SpectralField,
    q0: SpectralField,
    T: float,
    dt: float,
    order: int = 2,
    corrections: int = 1,
    nonlinear: bool = True,
    store_every: int = 1,
) -> SolutionTrace:
    """One-step exponential integrator with an exact linear part.

    order 1 freezes G over the step.  order 2 (default) uses the trapezoid
    rule for the forcing, ``y+ = E y + h/2 (E F(y) + F(y+))``, with the
    order-1 step as predictor and ``corrections`` corrector sweeps.
    """
    sc._check_grid(p0.grid, q0.grid)
    g = p0.grid
    if not dt > 0 or not T > 0:
        raise ValueError("T and dt must be positive")
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    _require_mean_free(p0.coeffs, g, "p0")
    _require_mean_free(q0.coeffs, g, "q0")
    n = max(1, int(math.ceil(T / dt - 1e-9)))
    h = T / n
    k = g.kmag
    m1, m2, m2k = multipliers(h, k)
    phi_p = -2.0 * m2k
    phi_q = 1.0 - m1 - 2.0 * m2

    def E(a, b):
        return m1 * a + 2 * m2k * b, -2 * m2k * a + (m1 + 2 * m2) * b

    p = p0.coeffs.copy()
    q = q0.coeffs.copy()
    p[g.zero_index] = 0.0
    q[g.zero_index] = 0.0
    ts, ps, qs = [0.0], [p.copy()], [q.copy()]
    for i in range(1, n + 1):
        ep, eq = E(p, q)
        if nonlinear:
            G0 = compute_G_array(p, q, g)
            pn, qn = ep + phi_p * G0, eq + phi_q * G0
            if order == 2:
                # forcing F = (-k G, 0) propagated by E
                fp, fq = E(-k * G0, np.zeros_like(G0))
                for _ in range(max(1, corrections)):
                    G1 = compute_G_array(pn, qn, g)
                    pn = ep + 0.5 * h * (fp - k * G1)
                    qn = eq + 0.5 * h * fq
        else:
            pn, qn = ep, eq
        p, q = pn, qn
        t = i * h
        _check_finite(p, g, t, "p")
        _check_finite(q, g, t, "q")
        if i % store_every == 0 or i == n:
            ts.append(t)
            ps.append(p.copy())
            qs.append(q.copy())
    meta = {"method": "etd", "order": order, "dt": h, "corrections": corrections, "nonlinear": nonlinear}
    return SolutionTrace(g, np.array(ts), np.stack(ps), np.stack(qs), None, meta)


# ---------------------------------------------------------------- variables


def infer_params(u0: PhysicalField, v0: PhysicalField, mu: float = 1.0) -> ModelParams:
    """u_bar from the grid mean of u0, c from the geometric mean of v0."""
    if np.any(v0.values <= 0):
        raise ValueError("v0 must be strictly positive")
    return ModelParams(mu=mu, u_bar=float(np.mean(u0.values)), c_gauge=float(np.exp(np.mean(np.log(v0.values)))))


def uv_to_pq(u0: PhysicalField, v0: PhysicalField, params: ModelParams | None = None):
    """Map (u0, v0) to mean-free (p0, q0); ``params`` is accepted for symmetry
    with :func:`pq_to_uv` but the density mean is always taken from ``u0``."""
    sc._check_grid(u0.grid, v0.grid)
    if np.any(~(v0.values > 0)):
        raise ValueError("v0 must be strictly positive")
    g = u0.grid
    u_bar = float(np.mean(u0.values))
    p = sc.fft_array(u0.values - u_bar, g)
    p[g.zero_index] = 0.0
    # scaling by the maximum first keeps the logarithm O(oscillation), so a
    # constant factor in v0 only enters through one rounded division
    h = sc.fft_array(np.log(v0.values / np.max(v0.values)), g)
    q = -g.kmag * h
    q[g.zero_index] = 0.0
    return SpectralField(g, p), SpectralField(g, q)


def pq_to_uv(state: SolutionState, params: ModelParams):
    g = state.p.grid
    u = params.u_bar + sc.ifft_array(state.p.coeffs, g).real
    lam_inv_q = sc.ifft_array(state.q.coeffs * g.kmag_inv, g).real
    v = params.c_gauge * math.exp(params.v_rate * state.t) * np.exp(-lam_inv_q)
    return PhysicalField(g, u), PhysicalField(g, v)


def apply_linear_state(state: SolutionState, t: float) -> SolutionState:
    p, q = apply_linear_array(state.p.coeffs, state.q.coeffs, state.p.grid.kmag, t)
    return SolutionState(state.t + t, state.p.with_coeffs(p), state.q.with_coeffs(q))
