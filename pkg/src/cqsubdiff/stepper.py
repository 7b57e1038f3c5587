"""Time marching for the semi-implicit CQ / P1-FEM scheme.

Each step solves one tridiagonal system

    (w_0 B + A(y^{n-1})) y^n = f^n(y^{n-1}) - B g^n

where ``g^n`` is the history term.  In direct form ``g^n = sum_{j<n} w_{n-j} y^j``.
In velocity form (BDF1 only) ``g^n = H^n - w_0 y^{n-1}`` with
``H^n = sum_{j<n} wt_{n-j} v^j``, ``v^j = (y^j - y^{j-1})/h`` and ``wt`` the
weights of the order ``1-alpha`` integral; the two forms agree up to roundoff.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _backend
from .cq import Kind, Method, WeightTable, check_admissible, generate_weights, l1_weights
from .exceptions import NonAdmissibleError
from .fem1d import (
    Mesh1D,
    ProblemSpec,
    StepAssembler,
    assemble_load,
    element_diffusivity,
    l2_norm,
    to_csv,
)
from .soe import EPS_MAX, EPS_MIN, CompressedHistory


@dataclass(frozen=True)
class TimeGrid:
    T: float
    N: int

    def __post_init__(self):
        if self.N < 1 or not self.T > 0.0:
            raise ValueError("need T > 0 and N >= 1")

    @property
    def h(self) -> float:
        return self.T / self.N

    def t(self, n: int) -> float:
        return n * self.h

    @property
    def times(self) -> np.ndarray:
        return self.h * np.arange(self.N + 1)


@dataclass(frozen=True)
class HistoryMode:
    """``naive`` stores and re-sums the whole history; ``fast`` compresses it."""

    kind: str = "naive"
    epsilon: float = 1e-8
    n0: int = 5

    def __post_init__(self):
        if self.kind not in ("naive", "fast"):
            raise ValueError(f"unknown history mode {self.kind!r}")
        if self.kind == "fast":
            if not (EPS_MIN <= self.epsilon <= EPS_MAX):
                raise ValueError(f"epsilon must lie in [{EPS_MIN:g}, {EPS_MAX:g}]")
            if self.n0 < 2:
                raise ValueError("n0 must be at least 2")

    @classmethod
    def naive(cls) -> "HistoryMode":
        return cls("naive")

    @classmethod
    def fast(cls, epsilon: float = 1e-8, n0: int = 5) -> "HistoryMode":
        return cls("fast", epsilon, n0)


@dataclass
class Trajectory:
    problem: ProblemSpec
    grid: TimeGrid
    mesh: Mesh1D
    method: Method
    history: HistoryMode
    form: str
    final: np.ndarray
    norms: np.ndarray  # ||U^n||_{L2}, n = 0..N
    wall_ns: np.ndarray  # history + solve region per step (index n-1 is step n)
    step_ns: np.ndarray  # whole step including assembly
    states: np.ndarray | None = None  # (N+1, M) when stored
    aux_state_count: int = 0
    history_ops: int = 0
    cfl_violations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def cfl_ok(self) -> bool:
        return self.cfl_violations == 0

    def state(self, n: int) -> np.ndarray:
        if n == self.grid.N:
            return self.final
        if self.states is None:
            raise ValueError("trajectory was run with store='final'")
        return self.states[n]

    def timed_seconds(self, whole_step: bool = True) -> float:
        """Total time with the first (warm-up) step excluded."""
        ns = self.step_ns if whole_step else self.wall_ns
        return float(ns[1:].sum()) * 1e-9

    def to_jsonl(self, fh) -> None:
        for n in range(self.grid.N + 1):
            rec = {
                "n": n,
                "t": self.grid.t(n),
                "l2norm": float(self.norms[n]),
                "wall_ns": int(self.wall_ns[n - 1]) if n else 0,
            }
            fh.write(json.dumps(rec) + "\n")

    def nodal_csv(self, n: int, fh=None):
        return to_csv(self.mesh, self.state(n), fh)


@lru_cache(maxsize=64)
def _cached_weights(method: Method, alpha: float, kind: Kind, h: float, N: int) -> WeightTable:
    if method is Method.L1:
        return l1_weights(alpha, h, N)
    return generate_weights(method, alpha, kind, h, N)


def weights_for(method, alpha: float, h: float, N: int) -> WeightTable:
    """Derivative table used by the direct form."""
    return _cached_weights(Method.parse(method), float(alpha), Kind.DERIVATIVE, float(h), int(N))


def velocity_weights(alpha: float, h: float, N: int) -> WeightTable:
    """BDF1 weights of the order ``1-alpha`` fractional integral."""
    return _cached_weights(Method.BDF1, 1.0 - float(alpha), Kind.INTEGRAL, float(h), int(N))


def _require_admissible(table: WeightTable, acknowledge: bool):
    verdict = check_admissible(table)
    if not verdict.admissible and not acknowledge:
        raise NonAdmissibleError(
            f"{table.method.name} weights at alpha={table.alpha} violate the sign condition "
            f"at j={verdict.first_violation}; pass acknowledge_inadmissible=True to run anyway"
        )


def _history_rows(history, n, M):
    Y = np.ascontiguousarray(history, dtype=float)
    if Y.ndim != 2 or Y.shape[0] < n or Y.shape[1] != M:
        raise ValueError(f"history must have shape (>= {n}, {M})")
    if np.any(Y[0] != 0.0):
        raise ValueError("history must start from the zero state")
    return Y


def step_direct(grid: TimeGrid, mesh: Mesh1D, spec: ProblemSpec, weights: WeightTable,
                history, n: int, acknowledge_inadmissible: bool = False) -> np.ndarray:
    """One step of the direct form given ``y^0..y^{n-1}`` (rows of ``history``)."""
    if n < 1 or n > weights.N:
        raise IndexError(f"step n={n} outside 1..{weights.N}")
    _require_admissible(weights, acknowledge_inadmissible)
    Y = _history_rows(history, n, mesh.M)
    t = grid.t(n)
    dmean = element_diffusivity(mesh, spec, t, Y[n - 1])
    load = assemble_load(mesh, spec, t, Y[n - 1])
    g = _backend.conv_history(weights.w, Y, n)
    return _backend.solve_cq_system(weights.w[0], mesh.k, dmean, load, g)


def step_velocity(grid: TimeGrid, mesh: Mesh1D, spec: ProblemSpec, int_weights: WeightTable,
                  history, n: int) -> np.ndarray:
    """One step of the velocity form from ``y^0..y^{n-1}``; BDF1 only."""
    if int_weights.method is not Method.BDF1 or int_weights.kind is not Kind.INTEGRAL:
        raise ValueError("the velocity form is derived for BDF1 integral weights")
    if n < 1 or n > int_weights.N:
        raise IndexError(f"step n={n} outside 1..{int_weights.N}")
    Y = _history_rows(history, n, mesh.M)
    h = grid.h
    V = np.zeros_like(Y[:n])
    V[1:] = np.diff(Y[:n], axis=0) / h
    t = grid.t(n)
    dmean = element_diffusivity(mesh, spec, t, Y[n - 1])
    load = assemble_load(mesh, spec, t, Y[n - 1])
    w0 = int_weights.w[0] / h
    g = _backend.conv_history(int_weights.w, V, n) - w0 * Y[n - 1]
    return _backend.solve_cq_system(w0, mesh.k, dmean, load, g)


def step_l1(grid: TimeGrid, mesh: Mesh1D, spec: ProblemSpec, history, n: int) -> np.ndarray:
    """One step with L1 weights in place of the CQ weights."""
    return step_direct(grid, mesh, spec, weights_for(Method.L1, spec.alpha, grid.h, grid.N),
                       history, n)


def run(problem: ProblemSpec, grid: TimeGrid, method="bdf1", history: HistoryMode | None = None,
        store: str = "all", *, M: int = 99, form: str | None = None,
        acknowledge_inadmissible: bool = False) -> Trajectory:
    """March from ``U^0 = 0`` to ``t_N = T``.

    ``form`` defaults to ``"direct"`` for naive history and ``"velocity"`` for
    fast history; the fast history exists only in velocity form with BDF1.
    """
    method = Method.parse(method)
    history = history or HistoryMode.naive()
    if store not in ("all", "final"):
        raise ValueError("store must be 'all' or 'final'")
    form = form or ("velocity" if history.kind == "fast" else "direct")
    if form not in ("direct", "velocity"):
        raise ValueError(f"unknown form {form!r}")
    if form == "velocity" and method is not Method.BDF1:
        raise ValueError("the velocity (and fast) form is available for BDF1 only")
    if history.kind == "fast" and form != "velocity":
        raise ValueError("fast history requires the velocity form")

    alpha, N, h = problem.alpha, grid.N, grid.h
    mesh = problem.mesh(M)
    assemble = StepAssembler(mesh, problem)
    dw = weights_for(method, alpha, h, N)
    _require_admissible(dw, acknowledge_inadmissible)

    keep_all = store == "all" or (history.kind == "naive")
    Y = np.zeros((N + 1, M)) if keep_all else None
    y_prev = np.zeros(M)
    norms = np.zeros(N + 1)
    wall = np.zeros(N, dtype=np.int64)
    whole = np.zeros(N, dtype=np.int64)
    mass_d, mass_o = 2.0 * mesh.k / 3.0, mesh.k / 6.0
    solve = _backend.solve_cq_system
    conv = _backend.conv_history
    clock = time.perf_counter_ns
    k = mesh.k
    cfl_bad = 0
    ops = 0
    aux = 0

    if form == "direct":
        w = dw.w
        step = _backend.direct_step
        for n in range(1, N + 1):
            t0 = clock()
            dmean, load = assemble(n * h, Y[n - 1])
            t1 = clock()
            step(w, Y, n, k, dmean, load)
            t2 = clock()
            wall[n - 1] = t2 - t1
            whole[n - 1] = t2 - t0
        ops = M * N * (N + 1) // 2
        y_prev = Y[N]
    elif history.kind == "fast":
        iw = velocity_weights(alpha, h, N)
        w0 = iw.w[0] / h
        hist = CompressedHistory(iw, M, n0=history.n0, epsilon=history.epsilon, N=N)
        aux = hist.aux_state_count
        step = _backend.velocity_soe_step
        y = np.zeros(M)
        window, R, Z = hist.window, hist.recent, hist.Z
        decay, inject, tail = hist.decay, hist.inject, hist.tail
        n0, Q = history.n0, hist.aux_state_count
        for n in range(1, N + 1):
            t0 = clock()
            dmean, load = assemble(n * h, y)
            t1 = clock()
            # v^n enters the window; v^{n-n0} drops into the compressed tail
            step(w0, k, h, dmean, load, y, window, R, Z, decay, inject, tail, n > n0)
            t2 = clock()
            if Y is not None:
                Y[n] = y
            else:
                norms[n] = l2_norm(mesh, y)
            wall[n - 1] = t2 - t1
            whole[n - 1] = t2 - t0
        hist.pushed = N
        ops = N * (n0 + 1) * M + max(N - n0, 0) * 2 * Q * M
        y_prev = y
    else:
        iw = velocity_weights(alpha, h, N)
        w0 = iw.w[0] / h
        V = np.zeros((N + 1, M))
        for n in range(1, N + 1):
            t0 = clock()
            dmean, load = assemble(n * h, y_prev)
            t1 = clock()
            g = conv(iw.w, V, n) - w0 * y_prev
            y = solve(w0, k, dmean, load, g)
            V[n] = (y - y_prev) / h
            t2 = clock()
            Y[n] = y
            y_prev = y
            wall[n - 1] = t2 - t1
            whole[n - 1] = t2 - t0
        ops = M * N * (N + 1) // 2

    # post-processing outside the timed region
    if Y is not None:
        BY = mass_d * Y
        BY[:, 1:] += mass_o * Y[:, :-1]
        BY[:, :-1] += mass_o * Y[:, 1:]
        norms = np.sqrt(np.maximum((BY * Y).sum(axis=1), 0.0))
    times = grid.times
    cfl_bad = int(np.count_nonzero(h / k > times[1:] ** (1.0 - alpha / 2.0)))
    return Trajectory(
        problem=problem,
        grid=grid,
        mesh=mesh,
        method=method,
        history=history,
        form=form,
        final=y_prev.copy(),
        norms=norms,
        wall_ns=wall,
        step_ns=whole,
        states=Y if store == "all" else None,
        aux_state_count=aux,
        history_ops=ops,
        cfl_violations=cfl_bad,
    )
