"""Command-line entry point and run configuration.

Subcommands: ``simulate``, ``verify-multipliers``, ``verify-estimates``,
``decay-report`` and ``convert``.  Exit status is 0 when every enabled
check passes, 1 when a check fails and 2 when the configuration is invalid.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from . import mild_solver as ms
from . import oracle
from . import persist
from . import semigroup as sg
from . import spectral_core as sc
from .initial_data import gaussian_data, random_band_data

log = logging.getLogger("kssolver")

COMMANDS = ("simulate", "verify-multipliers", "verify-estimates", "decay-report", "convert")
EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


@dataclass
class GridConfig:
    dim: int = 1
    n: int = 256
    L: float = 64 * math.pi


@dataclass
class InitialConfig:
    kind: str = "gaussian"
    eps0: float = 1e-2
    seed: int | None = None
    band: list = field(default_factory=lambda: [0.0, None])
    width: float = 0.125
    u_path: str | None = None
    v_path: str | None = None


@dataclass
class ParamsConfig:
    mu: float = 1.0
    u_bar: float = 1.0
    c_gauge: float = 1.0


@dataclass
class SolverConfig:
    method: str = "picard"
    T: float = 4.0
    n_t: int = 64
    dt: float | None = None
    tol: float = 1e-12
    mode: str = "strict"
    eps0_gate: float = ms.DEFAULT_EPS0
    order: int = 2
    rtol: float = 1e-10


@dataclass
class OutputConfig:
    directory: str = "out"
    snapshot_every: int = 0
    channels: list = field(default_factory=lambda: list(dg.CSV_CHANNELS))


@dataclass
class VerifyConfig:
    multipliers: bool = True
    bounds: bool = True
    oracle_samples: int = 10_000
    bilinear: bool = True
    bernstein: bool = True
    seeds: int = 100
    max_spread: float = 3.0
    decay_window: list | None = None
    decay_bound_factor: float = 100.0
    v_amplitude: bool = True
    v_tail: list | None = None
    rate_tol: float = 0.05


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    params: ParamsConfig = field(default_factory=ParamsConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    @classmethod
    def from_dict(cls, data: dict) -> tuple["RunConfig", list]:
        errors = []
        if not isinstance(data, dict):
            return cls(), [{"field": "", "error": "config must be a JSON object"}]
        sections = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in data.items():
            if key not in sections:
                errors.append({"field": key, "error": "unknown section"})
                continue
            sub_cls = type(getattr(cls(), key))
            if not isinstance(value, dict):
                errors.append({"field": key, "error": "section must be an object"})
                continue
            names = {f.name for f in dataclasses.fields(sub_cls)}
            bad = [k for k in value if k not in names]
            errors.extend({"field": f"{key}.{k}", "error": "unknown key"} for k in bad)
            kwargs[key] = sub_cls(**{k: v for k, v in value.items() if k in names})
        return cls(**kwargs), errors

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> list:
        errs = []

        def bad(name, msg):
            errs.append({"field": name, "error": msg})

        g = self.grid
        if g.dim not in (1, 2, 3):
            bad("grid.dim", "must be 1, 2 or 3")
        if not isinstance(g.n, int) or g.n < 4 or g.n % 2:
            bad("grid.n", "must be an even integer >= 4")
        if not _positive(g.L):
            bad("grid.L", "must be positive")
        ini = self.initial
        if ini.kind not in ("gaussian", "random_band", "from_file"):
            bad("initial.kind", "must be gaussian, random_band or from_file")
        if not (_number(ini.eps0) and ini.eps0 >= 0):
            bad("initial.eps0", "must be a nonnegative number")
        if ini.kind == "random_band" and not isinstance(ini.seed, int):
            bad("initial.seed", "an integer seed is required for random initial data")
        if ini.seed is not None and (not isinstance(ini.seed, int) or ini.seed < 0 or ini.seed >= 2**64):
            bad("initial.seed", "must be an unsigned 64-bit integer")
        if not (isinstance(ini.band, list) and len(ini.band) == 2):
            bad("initial.band", "must be [lo, hi] (hi may be null)")
        elif not (_number(ini.band[0]) and ini.band[0] >= 0 and (ini.band[1] is None or (_number(ini.band[1]) and ini.band[1] > ini.band[0]))):
            bad("initial.band", "need 0 <= lo < hi")
        if not _positive(ini.width):
            bad("initial.width", "must be positive")
        if ini.kind == "from_file" and not (ini.u_path and ini.v_path):
            bad("initial.u_path", "from_file needs u_path and v_path")
        p = self.params
        if not (_number(p.mu) and p.mu >= 0):
            bad("params.mu", "must be nonnegative")
        if not _positive(p.u_bar):
            bad("params.u_bar", "must be positive")
        if not _positive(p.c_gauge):
            bad("params.c_gauge", "must be positive")
        s = self.solver
        if s.method not in ("picard", "etd", "oracle"):
            bad("solver.method", "must be picard, etd or oracle")
        if not _positive(s.T):
            bad("solver.T", "must be positive")
        if s.method == "picard" and not (isinstance(s.n_t, int) and s.n_t >= 8):
            bad("solver.n_t", "picard needs an integer n_t >= 8")
        if s.dt is not None and not _positive(s.dt):
            bad("solver.dt", "must be positive")
        if not _positive(s.tol):
            bad("solver.tol", "must be positive")
        if s.mode not in ("strict", "research"):
            bad("solver.mode", "must be strict or research")
        if not _positive(s.eps0_gate):
            bad("solver.eps0_gate", "must be positive")
        if s.order not in (1, 2):
            bad("solver.order", "must be 1 or 2")
        if not (_positive(s.rtol) and s.rtol < 1):
            bad("solver.rtol", "must lie in (0, 1)")
        o = self.output
        if not isinstance(o.directory, str) or not o.directory:
            bad("output.directory", "must be a nonempty path")
        if not (isinstance(o.snapshot_every, int) and o.snapshot_every >= 0):
            bad("output.snapshot_every", "must be a nonnegative integer")
        unknown = [c for c in o.channels if c not in _ALL_CHANNELS]
        if unknown:
            bad("output.channels", f"unknown channels {unknown}")
        v = self.verify
        if not (isinstance(v.seeds, int) and v.seeds >= 1):
            bad("verify.seeds", "must be a positive integer")
        if not (isinstance(v.oracle_samples, int) and v.oracle_samples >= 1):
            bad("verify.oracle_samples", "must be a positive integer")
        for name in ("decay_window", "v_tail"):
            w = getattr(v, name)
            if w is not None and not (isinstance(w, list) and len(w) == 2 and all(_number(x) for x in w) and w[0] < w[1]):
                bad(f"verify.{name}", "must be [lo, hi] with lo < hi")
        if not _positive(v.max_spread):
            bad("verify.max_spread", "must be positive")
        if not _positive(v.decay_bound_factor):
            bad("verify.decay_bound_factor", "must be positive")
        if not _positive(v.rate_tol):
            bad("verify.rate_tol", "must be positive")
        return errs


_ALL_CHANNELS = (
    "L2_p", "H1dot_p", "H1dot_q", "H1_q", "H2_p", "Hpsi74_p", "Lam74_p", "grad_pq",
    "Linf_Laminv_q", "Linf_v_over_c", "L2_q", "energy", "G_L2",
)


def _number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _positive(x) -> bool:
    return _number(x) and x > 0


# ---------------------------------------------------------------- orchestration


def _grid(cfg: RunConfig) -> sc.FrequencyGrid:
    return sc.make_grid(cfg.grid.dim, cfg.grid.n, float(cfg.grid.L))


def _params(cfg: RunConfig) -> ms.ModelParams:
    p = cfg.params
    return ms.ModelParams(mu=float(p.mu), u_bar=float(p.u_bar), c_gauge=float(p.c_gauge))


def build_initial(cfg: RunConfig):
    """Return ``(p0, q0, params)``; file input may refine u_bar and c."""
    ini = cfg.initial
    params = _params(cfg)
    if ini.kind == "from_file":
        u, _ = persist.read_snapshot(ini.u_path)
        v, _ = persist.read_snapshot(ini.v_path)
        if not isinstance(u, sc.PhysicalField) or not isinstance(v, sc.PhysicalField):
            raise ValueError("from_file expects physical-space snapshots of u and v")
        inferred = ms.infer_params(u, v, mu=params.mu)
        p0, q0 = ms.uv_to_pq(u, v, inferred)
        return p0, q0, inferred
    g = _grid(cfg)
    if ini.kind == "gaussian":
        p0, q0 = gaussian_data(g, float(ini.eps0), width=float(ini.width))
    else:
        hi = math.inf if ini.band[1] is None else float(ini.band[1])
        p0, q0 = random_band_data(g, float(ini.eps0), int(ini.seed), (float(ini.band[0]), hi))
    return p0, q0, params


def solve(cfg: RunConfig, p0, q0, T: float | None = None):
    s = cfg.solver
    T = float(s.T if T is None else T)
    info = {}
    if s.method == "picard":
        n_t = int(s.n_t) if s.dt is None else max(8, round(T / s.dt))
        trace, rep = ms.picard_solve(p0, q0, T, n_t, tol=float(s.tol), mode=s.mode, eps0=float(s.eps0_gate))
        info["picard"] = rep.to_dict()
        ok = rep.converged
    elif s.method == "etd":
        dt = float(s.dt) if s.dt is not None else T / int(s.n_t)
        ms._smallness_gate(p0, q0, float(s.eps0_gate), s.mode)
        trace = ms.etd_march(p0, q0, T, dt, order=int(s.order))
        ok = True
    else:
        times = np.linspace(0.0, T, int(s.n_t) + 1)
        run = oracle.direct_spectral_ode(p0, q0, T, rtol=float(s.rtol), times=times)
        trace = run.trace
        info["oracle"] = {"method": run.method, "nfev": run.nfev, "rtol": run.rtol, "atol": run.atol}
        ok = True
    ok = ok and bool(np.all(np.isfinite(trace.p))) and bool(np.all(np.isfinite(trace.q)))
    return trace, info, ok


def _provenance(cfg: RunConfig) -> dict:
    return {"config_hash": persist.config_hash(cfg.to_dict()), "revision": persist.revision()}


def _write_snapshots(cfg, trace, out: Path):
    every = int(cfg.output.snapshot_every)
    if every <= 0:
        return []
    prov = _provenance(cfg)
    written = []
    for i in range(0, len(trace), every):
        st = trace.state(i)
        for name, fld in (("p", st.p), ("q", st.q)):
            path = out / "snapshots" / f"{name}_{i:05d}.kssf"
            persist.write_snapshot(path, fld, st.t, {**prov, "field": name, "index": i, "solver": trace.meta.get("method")})
            written.append(str(path.relative_to(out)))
    return written


def _write_norms(cfg, series, out: Path):
    persist.atomic_write_text(out / "norms.csv", series.to_csv(tuple(cfg.output.channels)))


def _finish(cfg, out: Path, command: str, checks: dict, body: dict) -> int:
    passed = all(bool(v) for v in checks.values())
    report = {
        "command": command,
        "config": cfg.to_dict(),
        "provenance": _provenance(cfg),
        "checks": checks,
        "pass": passed,
        **body,
    }
    persist.atomic_write_text(out / "report.json", persist.dump_json(report))
    return EXIT_OK if passed else EXIT_FAIL


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    p0, q0, params = build_initial(cfg)
    try:
        trace, info, ok = solve(cfg, p0, q0)
    except (ms.SmallnessError, ms.ContractionError) as exc:
        return _finish(cfg, out, "simulate", {"solver": False}, {"error": str(exc)})
    series = dg.norm_timeseries(trace, params)
    _write_norms(cfg, series, out)
    snaps = _write_snapshots(cfg, trace, out)
    finite = all(bool(np.all(np.isfinite(v))) for v in series.channels.values())
    body = {
        "solver_info": info,
        "params": dataclasses.asdict(params),
        "norms": {"X": series.X, "Y": series.Y, "functional": dg.solution_functional(series)},
        "snapshots": snaps,
    }
    return _finish(cfg, out, "simulate", {"solver": ok, "finite_norms": finite}, body)


def oracle_equivalence(samples: int, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    n_cluster = max(1, samples // 10)
    t = rng.uniform(0.0, 20.0, samples)
    k = 10.0 ** rng.uniform(-3.0, 3.0, samples)
    k[:n_cluster] = 2.0 + rng.uniform(-1e-6, 1e-6, n_cluster)
    err = np.abs(sg.propagator(t, k) - oracle.expm2x2(t, k)).max(axis=(-1, -2))
    j = int(np.argmax(err))
    return {"samples": samples, "max_abs_error": float(err[j]), "worst_t": float(t[j]), "worst_k": float(k[j]), "tolerance": 1e-10, "pass": bool(err[j] <= 1e-10)}


def cmd_verify_multipliers(cfg: RunConfig, out: Path) -> int:
    checks, body = {}, {}
    v = cfg.verify
    if v.bounds:
        reports = sg.certify_bounds() + sg.certify_smoothing()
        header = ("id", "regime", "worst_t", "worst_k", "ratio", "constant", "pass")
        rows = [[r.to_row()[h] for h in header] for r in reports]
        persist.atomic_write_text(out / "bounds.csv", persist.rows_to_csv(header, rows))
        body["bounds"] = [{**r.to_row(), "domain": r.domain, "note": r.note, "fitted": r.fitted} for r in reports]
        checks.update({f"bound:{r.id}": r.passed for r in reports})
    if v.multipliers:
        seed = cfg.initial.seed if cfg.initial.seed is not None else 0
        eq = oracle_equivalence(int(v.oracle_samples), seed)
        body["oracle_equivalence"] = eq
        checks["oracle_equivalence"] = eq["pass"]
    return _finish(cfg, out, "verify-multipliers", checks, body)


def cmd_verify_estimates(cfg: RunConfig, out: Path) -> int:
    checks, body = {}, {}
    v = cfg.verify
    seed0 = cfg.initial.seed if cfg.initial.seed is not None else 0
    reports = []
    if v.bilinear:
        reports += dg.bilinear_check(int(v.seeds), grid=_grid(cfg), seed0=seed0)
    if v.bernstein:
        reports += dg.bernstein_check(int(v.seeds), seed0=seed0)
    body["estimates"] = [r.to_dict() for r in reports]
    for r in reports:
        checks[f"estimate:{r.id}"] = r.finite and r.spread < float(v.max_spread)
    header = ("id", "n", "max_ratio", "min_ratio", "mean_ratio", "spread", "finite")
    rows = [[r.to_dict()[h] for h in header] for r in reports]
    persist.atomic_write_text(out / "estimates.csv", persist.rows_to_csv(header, rows))
    return _finish(cfg, out, "verify-estimates", checks, body)


def spectral_gap_time(grid: sc.FrequencyGrid) -> float:
    """Window end 1/(2 k_min^2) before the box's slowest mode dominates."""
    return 1.0 / (2.0 * grid.k_min**2)


def cmd_decay_report(cfg: RunConfig, out: Path) -> int:
    g = _grid(cfg)
    p0, q0, params = build_initial(cfg)
    v = cfg.verify
    t_star = spectral_gap_time(g)
    window = tuple(v.decay_window) if v.decay_window is not None else (1.0, t_star)
    try:
        trace, info, ok = solve(cfg, p0, q0, T=max(float(cfg.solver.T), window[1]))
    except (ms.SmallnessError, ms.ContractionError) as exc:
        return _finish(cfg, out, "decay-report", {"solver": False}, {"error": str(exc)})
    series = dg.norm_timeseries(trace, params)
    _write_norms(cfg, series, out)
    bound = float(v.decay_bound_factor) * float(cfg.initial.eps0)
    reps = [
        dg.weighted_sup(series, "grad_pq", 0.5, window=window, fit_window=window, bound=bound),
        dg.weighted_sup(series, "Lam74_p", 7 / 8, window=window, fit_window=window, bound=bound),
    ]
    checks = {"solver": ok}
    for r in reps:
        checks[f"decay:{r.channel}"] = r.passed
    body = {"solver_info": info, "decay": [r.to_dict() for r in reps], "T_star": t_star}
    if v.v_amplitude:
        va = dg.v_amplitude_check(trace, params, tail=None if v.v_tail is None else tuple(v.v_tail), rate_tol=float(v.rate_tol))
        body["v_amplitude"] = va.to_dict()
        checks["v_amplitude"] = va.passed
    rows = [[f"{t:.17g}", c, f"{val:.17g}", f"{(1 + t) ** r.gamma * val:.17g}"]
            for r in reps for t, c, val in zip(series.times, [r.channel] * len(series.times), series[r.channel])]
    persist.atomic_write_text(out / "decay.csv", persist.rows_to_csv(("t", "channel", "value", "weighted"), rows))
    return _finish(cfg, out, "decay-report", checks, body)


def cmd_convert(cfg: RunConfig, out: Path, args) -> int:
    params = _params(cfg)
    if args.u and args.v:
        u, _ = persist.read_snapshot(args.u)
        v, _ = persist.read_snapshot(args.v)
        p, q = ms.uv_to_pq(u, v, params)
        prov = _provenance(cfg)
        persist.write_snapshot(out / "p.kssf", p, 0.0, {**prov, "field": "p"})
        persist.write_snapshot(out / "q.kssf", q, 0.0, {**prov, "field": "q"})
        c = ms.infer_params(u, v, params.mu).c_gauge
        return _finish(cfg, out, "convert", {"converted": True}, {"direction": "uv->pq", "gauge_constant": c})
    if args.p and args.q:
        p, t = persist.read_snapshot(args.p)
        q, _ = persist.read_snapshot(args.q)
        u, v = ms.pq_to_uv(ms.SolutionState(t, p, q), params)
        prov = _provenance(cfg)
        persist.write_snapshot(out / "u.kssf", u, t, {**prov, "field": "u"})
        persist.write_snapshot(out / "v.kssf", v, t, {**prov, "field": "v"})
        return _finish(cfg, out, "convert", {"converted": True}, {"direction": "pq->uv"})
    raise ValueError("convert needs --u/--v or --p/--q")


# ---------------------------------------------------------------- argparse


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kssolver", description="Spectral solver and verification harness.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON run configuration")
        sp.add_argument("--out", help="output directory (overrides output.directory)")
        sp.add_argument("--seed", type=int, help="random seed, unsigned 64-bit")
        sp.add_argument("--mode", choices=("strict", "research"))
        if name == "convert":
            for f in ("u", "v", "p", "q"):
                sp.add_argument(f"--{f}", help=f"input snapshot of {f}")
    return ap


def load_config(args) -> tuple[RunConfig, list]:
    data = {}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            return RunConfig(), [{"field": "--config", "error": str(exc)}]
    cfg, errors = RunConfig.from_dict(data)
    if args.out:
        cfg.output.directory = args.out
    if args.seed is not None:
        cfg.initial.seed = args.seed
    if args.mode:
        cfg.solver.mode = args.mode
    try:
        errors += cfg.validate()
    except TypeError as exc:
        errors.append({"field": "", "error": f"type error: {exc}"})
    return cfg, errors


def run(cfg: RunConfig, command: str, args=None) -> int:
    out = Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    if command == "simulate":
        return cmd_simulate(cfg, out)
    if command == "verify-multipliers":
        return cmd_verify_multipliers(cfg, out)
    if command == "verify-estimates":
        return cmd_verify_estimates(cfg, out)
    if command == "decay-report":
        return cmd_decay_report(cfg, out)
    if command == "convert":
        return cmd_convert(cfg, out, args)
    raise ValueError(f"unknown command {command!r}")


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    cfg, errors = load_config(args)
    if errors:
        sys.stderr.write(json.dumps({"errors": errors}, indent=2) + "\n")
        return EXIT_CONFIG
    try:
        return run(cfg, args.command, args)
    except (ValueError, OSError) as exc:
        sys.stderr.write(json.dumps({"errors": [{"field": "", "error": str(exc)}]}) + "\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
