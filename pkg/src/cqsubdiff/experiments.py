"""Benchmark problems, convergence and order studies, and timing comparisons."""
from __future__ import annotations

import csv
import gc
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gamma

from .cq import Method
from .exceptions import ConfigError, UndefinedOrderError
from .fem1d import Mesh1D, ProblemSpec, l2_error, l2_norm
from .stepper import HistoryMode, TimeGrid, run

POROUS_X0 = 0.5
POROUS_DELTA = 1e-3
POROUS_M = 40
TIMING_M = 255


def manufactured_problem(alpha: float) -> ProblemSpec:
    """Problem on (0, 1) with exact solution ``t**alpha * x * (1 - x)`` and ``D = exp(-u)``."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    g = float(gamma(1.0 + alpha))

    def D(x, t, u):
        return np.exp(-u)

    def f(x, t, u):
        ta = t**alpha
        return np.exp(-u) * ta * (2.0 + ta * (1.0 - 2.0 * x) ** 2) + g * x * (1.0 - x)

    def exact(x, t):
        return t**alpha * x * (1.0 - x)

    return ProblemSpec(alpha, D, f, exact=exact, name=f"manufactured(alpha={alpha:g})")


def porous_problem(alpha: float, x0: float = POROUS_X0, delta: float = POROUS_DELTA) -> ProblemSpec:
    """Gaussian point-like source at ``x0`` of width ``delta``, ``D = exp(-u)``; no exact solution."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if not delta > 0.0:
        raise ValueError("delta must be positive")
    if not 0.0 < x0 < 1.0:
        raise ValueError("x0 must lie in (0, 1)")
    peak = 1.0 / math.sqrt(4.0 * math.pi * delta)

    def D(x, t, u):
        return np.exp(-u)

    def f(x, t, u):
        return peak * np.exp(-((x - x0) ** 2) / (4.0 * delta))

    return ProblemSpec(alpha, D, f, name=f"porous(alpha={alpha:g}, x0={x0:g}, delta={delta:g})")


@dataclass(frozen=True)
class StudyConfig:
    alphas: tuple = (0.1, 0.3, 0.5, 0.7, 0.9)
    levels: tuple = (5, 6, 7, 8, 9)
    T: float = 1.0
    M: int = 99
    methods: tuple = ("bdf1", "bdf2")
    histories: tuple = ("naive",)
    reps: int = 1
    epsilon: float = 1e-8
    n0: int = 5
    threads: int = 1
    fit_levels: int = 3  # finest levels used in slope fits

    def __post_init__(self):
        if not self.alphas or any(not 0.0 < a < 1.0 for a in self.alphas):
            raise ConfigError("alphas must be a nonempty list in (0, 1)")
        if not self.levels or any(b <= a for a, b in zip(self.levels, self.levels[1:])):
            raise ConfigError("levels must be strictly increasing")
        if min(self.levels) < 0 or max(self.levels) > 20:
            raise ConfigError("levels must lie in 0..20")
        if not self.T > 0.0:
            raise ConfigError("T must be positive")
        if self.M < 1:
            raise ConfigError("M must be at least 1")
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.fit_levels < 2:
            raise ConfigError("fit_levels must be at least 2")
        for m in self.methods:
            try:
                Method.parse(m)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        for hk in self.histories:
            if hk not in ("naive", "fast"):
                raise ConfigError(f"unknown history mode {hk!r}")
        if "fast" in self.histories:
            try:
                HistoryMode.fast(self.epsilon, self.n0)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class ErrorRow:
    alpha: float
    method: str
    N: int
    h: float
    error_T: float
    error_t1: float
    nodal_error_T: float = math.nan  # ||U - I_k u||, spatial interpolation error removed
    nodal_error_t1: float = math.nan


@dataclass(frozen=True)
class TimingRow:
    alpha: float
    N: int
    M: int
    reps: int
    naive_over_fast: float
    naive_over_fast_std: float
    l1_over_fast: float
    l1_over_fast_std: float
    history_naive_over_fast: float  # history + solve region only
    history_naive_over_fast_std: float


@dataclass
class ErrorReport:
    errors: list = field(default_factory=list)
    slopes: dict = field(default_factory=dict)  # (alpha, method) -> (slope_T, slope_t1)
    nodal_slopes: dict = field(default_factory=dict)
    orders: dict = field(default_factory=dict)  # (method, alpha) -> Aitken order or nan
    timings: list = field(default_factory=list)

    def slope(self, alpha, method, at="T", measure="l2") -> float:
        """Fitted order at ``T`` or ``t1``; ``measure`` is ``"l2"`` or ``"nodal"``."""
        table = self.slopes if measure == "l2" else self.nodal_slopes
        pair = table[(alpha, Method.parse(method).value)]
        return pair[0] if at == "T" else pair[1]


def fit_slope(hs, errors, finest: int = 3) -> float:
    """Least-squares slope of log(error) against log(h) on the ``finest`` smallest h."""
    pts = sorted((h, e) for h, e in zip(hs, errors) if e > 0.0 and math.isfinite(e))
    pts = pts[:finest]
    if len(pts) < 2:
        return math.nan
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def convergence_study(config: StudyConfig) -> ErrorReport:
    """L2 errors at ``t_1 = h`` and at ``T`` for the manufactured problem.

    Besides the error against the exact solution, the error against its
    nodal interpolant is recorded.  The latter omits the O(k^2) spatial
    interpolation error, which otherwise floors the curves once the time
    error drops below it.
    """
    cells = [(a, Method.parse(m), L) for a in config.alphas for m in config.methods
             for L in config.levels]

    def cell(c):
        alpha, method, L = c
        spec = manufactured_problem(alpha)
        grid = TimeGrid(config.T, 2**L)
        tr = run(spec, grid, method, M=config.M, acknowledge_inadmissible=True)
        mesh, t1 = tr.mesh, grid.t(1)
        u_T = lambda x: spec.exact(x, config.T)
        u_1 = lambda x: spec.exact(x, t1)
        return ErrorRow(alpha, method.value, grid.N, grid.h,
                        l2_error(mesh, tr.final, u_T), l2_error(mesh, tr.state(1), u_1),
                        l2_norm(mesh, tr.final - mesh.nodal_interpolant(u_T)),
                        l2_norm(mesh, tr.state(1) - mesh.nodal_interpolant(u_1)))

    report = ErrorReport(errors=_map(cell, cells, config.threads))
    for a in config.alphas:
        for m in config.methods:
            key = (a, Method.parse(m).value)
            rows = [r for r in report.errors if (r.alpha, r.method) == key]
            hs = [r.h for r in rows]
            fit = lambda attr: fit_slope(hs, [getattr(r, attr) for r in rows], config.fit_levels)
            report.slopes[key] = (fit("error_T"), fit("error_t1"))
            report.nodal_slopes[key] = (fit("nodal_error_T"), fit("nodal_error_t1"))
    return report


def aitken_order(U_h, U_h2, U_h4, mesh: Mesh1D | None = None) -> float:
    """``log2(|U_h - U_h2| / |U_h2 - U_h4|)`` in the discrete L2 norm (Euclidean without a mesh).

    Raises :class:`UndefinedOrderError` when either difference is within
    ``10 * eps`` of the size of the iterates.
    """
    U_h, U_h2, U_h4 = (np.asarray(u, dtype=float) for u in (U_h, U_h2, U_h4))
    norm = (lambda v: l2_norm(mesh, v)) if mesh is not None else np.linalg.norm
    d1, d2 = norm(U_h - U_h2), norm(U_h2 - U_h4)
    scale = max(norm(U_h), norm(U_h2), norm(U_h4), np.finfo(float).tiny)
    floor = 10.0 * np.finfo(float).eps * scale
    if not (d1 > floor and d2 > floor):
        raise UndefinedOrderError(f"difference norms {d1:.3g}, {d2:.3g} below {floor:.3g}")
    return math.log2(d1 / d2)


def aitken_study(alphas=tuple(i / 10 for i in range(1, 10)), methods=("bdf1", "bdf2"),
                 base_level: int = 8, T: float = 1.0, M: int = POROUS_M,
                 x0: float = POROUS_X0, delta: float = POROUS_DELTA, threads: int = 1) -> ErrorReport:
    """Aitken orders at ``T`` for the porous problem from levels base, base+1, base+2."""
    cells = [(Method.parse(m), a) for m in methods for a in alphas]

    def cell(c):
        method, alpha = c
        spec = porous_problem(alpha, x0, delta)
        finals = [run(spec, TimeGrid(T, 2 ** (base_level + i)), method, M=M, store="final",
                      acknowledge_inadmissible=True) for i in range(3)]
        try:
            p = aitken_order(*(tr.final for tr in finals), mesh=finals[0].mesh)
        except UndefinedOrderError:
            p = math.nan
        return (method.value, alpha), p

    return ErrorReport(orders=dict(_map(cell, cells, threads)))


def _mean_std(xs):
    xs = np.asarray(xs, dtype=float)
    return float(xs.mean()), float(xs.std(ddof=1)) if len(xs) > 1 else 0.0


def timing_comparison(alphas=(0.3, 0.5, 0.7), N: int = 512, M: int = TIMING_M, reps: int = 20,
                      epsilon: float = 1e-8, n0: int = 5, include_l1: bool = True,
                      x0: float = POROUS_X0, delta: float = POROUS_DELTA) -> list:
    """Per-step wall-time ratios naive/fast and L1/fast on the porous problem.

    Each repetition runs the variants back to back and contributes one ratio
    of mean step times; the first step of every run is excluded as warm-up.
    Cells run serially with the garbage collector paused.
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    grid = TimeGrid(1.0, N)
    fast = HistoryMode.fast(epsilon, n0)
    rows = []
    enabled = gc.isenabled()
    gc.disable()
    try:
        for alpha in alphas:
            spec = porous_problem(alpha, x0, delta)
            run(spec, grid, "bdf1", fast, store="final", M=M)  # warm caches
            r_naive, r_l1, r_hist = [], [], []
            for _ in range(reps):
                tf = run(spec, grid, "bdf1", fast, store="final", M=M)
                tn = run(spec, grid, "bdf1", M=M)
                r_naive.append(tn.timed_seconds() / tf.timed_seconds())
                r_hist.append(tn.timed_seconds(False) / tf.timed_seconds(False))
                if include_l1:
                    tl = run(spec, grid, "l1", M=M)
                    r_l1.append(tl.timed_seconds() / tf.timed_seconds())
                gc.collect()
            l1 = _mean_std(r_l1) if include_l1 else (math.nan, math.nan)
            rows.append(TimingRow(alpha, N, M, reps, *_mean_std(r_naive), *l1, *_mean_std(r_hist)))
    finally:
        if enabled:
            gc.enable()
    return rows


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else f"{v:.17g}"
    return str(v)


def write_errors_csv(report: ErrorReport, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["alpha", "method", "N", "h", "error_T", "error_t1", "nodal_error_T",
                "nodal_error_t1"])
    for r in report.errors:
        w.writerow([_fmt(r.alpha), r.method, r.N, _fmt(r.h), _fmt(r.error_T), _fmt(r.error_t1),
                    _fmt(r.nodal_error_T), _fmt(r.nodal_error_t1)])
    w.writerow([])
    w.writerow(["alpha", "method", "slope_T", "slope_t1", "nodal_slope_T", "nodal_slope_t1"])
    for key, (sT, s1) in report.slopes.items():
        nT, n1 = report.nodal_slopes.get(key, (math.nan, math.nan))
        w.writerow([_fmt(key[0]), key[1], _fmt(sT), _fmt(s1), _fmt(nT), _fmt(n1)])


def write_orders_csv(report: ErrorReport, fh) -> None:
    """Rows: method; columns: alpha."""
    alphas = sorted({a for _, a in report.orders})
    methods = list(dict.fromkeys(m for m, _ in report.orders))
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["method", *(_fmt(a) for a in alphas)])
    for m in methods:
        w.writerow([m, *(f"{report.orders.get((m, a), math.nan):.4f}" for a in alphas)])


def write_bench_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    names = list(TimingRow.__dataclass_fields__)
    w.writerow(names)
    for r in rows:
        w.writerow([_fmt(getattr(r, n)) for n in names])


def write_jsonl(report: ErrorReport, fh) -> None:
    """Long-format records, one per line, for plotting."""
    for r in report.errors:
        fh.write(json.dumps({"record": "error", **asdict(r)}) + "\n")
    for (a, m), (sT, s1) in report.slopes.items():
        nT, n1 = report.nodal_slopes.get((a, m), (math.nan, math.nan))
        fh.write(json.dumps({"record": "slope", "alpha": a, "method": m, "slope_T": sT,
                             "slope_t1": s1, "nodal_slope_T": nT, "nodal_slope_t1": n1}) + "\n")
    for (m, a), p in report.orders.items():
        fh.write(json.dumps({"record": "order", "alpha": a, "method": m,
                             "order": None if math.isnan(p) else p}) + "\n")
    for r in report.timings:
        fh.write(json.dumps({"record": "timing", **asdict(r)}) + "\n")


def format_orders_table(report: ErrorReport) -> str:
    alphas = sorted({a for _, a in report.orders})
    methods = list(dict.fromkeys(m for m, _ in report.orders))
    label = {"bdf1": "Euler", "bdf2": "BDF2", "l1": "L1"}
    lines = ["alpha  " + " ".join(f"{a:>5.2g}" for a in alphas)]
    for m in methods:
        lines.append(f"{label.get(m, m):<6} " + " ".join(
            f"{report.orders[(m, a)]:5.2f}" for a in alphas))
    return "\n".join(lines)
