"""Executable checks of the CQ energy inequality and the integrated bound.

Both verifiers evaluate the two sides in double precision and allow a
roundoff slack of ``1e-12`` times the scale of the data.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .cq import Kind, Method, WeightTable, check_admissible, generate_weights
from .exceptions import InvalidFixtureError, NonAdmissibleError

REL_TOL = 1e-12


class CoercivityResult(NamedTuple):
    lhs_half_square: float
    mid: float
    rhs_inner: float
    holds: bool


def _require_admissible(table: WeightTable):
    verdict = check_admissible(table)
    if not verdict.admissible:
        raise NonAdmissibleError(
            f"{table.method.name} weights at alpha={table.alpha} violate the sign "
            f"condition at j={verdict.first_violation}; the inequality does not apply"
        )


def verify_coercivity(table: WeightTable, seq, n: int) -> CoercivityResult:
    """Evaluate the chain ``1/2 d(|y|^2) <= |y| d|y| <= (d y, y)`` at step n.

    ``seq`` has shape ``(L, dim)`` (or ``(L,)`` for scalars) with ``seq[0] = 0``.
    """
    _require_admissible(table)
    y = np.asarray(seq, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if not 0 <= n < len(y) or n > table.N:
        raise IndexError(f"n={n} out of range")
    if np.any(y[0] != 0.0):
        raise InvalidFixtureError("sequence must start at zero", index=0)
    w = table.w[n::-1]
    norms = np.linalg.norm(y[: n + 1], axis=1)
    lhs = 0.5 * (w @ norms**2)
    mid = norms[n] * (w @ norms)
    rhs = float((w @ y[: n + 1]) @ y[n])
    scale = np.abs(table.w[: n + 1]).sum() * max(norms.max(), 1e-300) ** 2
    tol = REL_TOL * scale
    return CoercivityResult(float(lhs), float(mid), rhs, bool(lhs <= mid + tol and mid <= rhs + tol))


def verify_integrated_bound(dtable: WeightTable, itable: WeightTable, y, G) -> bool:
    """Check ``y[n] <= sum_{j=1}^n b[n-j] G[j]`` for every n.

    The caller supplies data with ``d y[n] <= G[n]``; if that hypothesis fails
    at some n an :class:`InvalidFixtureError` carrying that index is raised.
    """
    _require_admissible(dtable)
    if itable.kind is not Kind.INTEGRAL or dtable.kind is not Kind.DERIVATIVE:
        raise ValueError("need a derivative table and an integral table")
    if (itable.method, itable.alpha, itable.h) != (dtable.method, dtable.alpha, dtable.h):
        raise ValueError("tables must share method, alpha and h")
    y = np.asarray(y, dtype=float)
    G = np.asarray(G, dtype=float)
    N = len(y) - 1
    if len(G) != len(y) or N > min(dtable.N, itable.N):
        raise ValueError("sequence lengths do not match the tables")
    if y[0] != 0.0:
        raise InvalidFixtureError("y must start at zero", index=0)
    if np.any(y < 0.0) or np.any(G < 0.0):
        raise InvalidFixtureError("sequences must be nonnegative")
    w, b = dtable.w, itable.w
    for n in range(1, N + 1):
        dy = w[n::-1] @ y[: n + 1]
        slack = REL_TOL * (np.abs(w[n::-1]) @ y[: n + 1] + abs(G[n]))
        if dy > G[n] + slack:
            raise InvalidFixtureError(
                f"hypothesis d y[n] <= G[n] fails at n={n} ({dy!r} > {G[n]!r})", index=n
            )
    for n in range(1, N + 1):
        bound = b[n - 1 :: -1] @ G[1 : n + 1]
        scale = abs(y[n]) + np.abs(b[n - 1 :: -1]) @ np.abs(G[1 : n + 1])
        if y[n] > bound + REL_TOL * scale:
            return False
    return True


def convolution_inverse_defect(dtable: WeightTable, itable: WeightTable) -> float:
    """Largest relative defect of ``sum_i w_i b_{m-i} = [m == 0]`` over the common length.

    Each defect is measured against ``sum_i |w_i b_{m-i}|``.
    """
    n = min(dtable.N, itable.N) + 1
    w, b = dtable.w[:n], itable.w[:n]
    prod = np.convolve(w, b)[:n]
    scale = np.convolve(np.abs(w), np.abs(b))[:n]
    target = np.zeros(n)
    target[0] = 1.0
    return float(np.max(np.abs(prod - target) / scale))


class SuiteResult(NamedTuple):
    samples: int
    coercivity_failures: int
    bound_failures: int
    inverse_failures: int

    @property
    def ok(self) -> bool:
        return self.coercivity_failures == self.bound_failures == self.inverse_failures == 0


BDF2_SAFE_ALPHA = 0.6  # below the 5/8 sign-change threshold


def _random_table(rng, method, alpha, n):
    method = Method.parse(method) if method is not None else rng.choice([Method.BDF1, Method.BDF2])
    if alpha is None:
        hi = 0.99 if method is Method.BDF1 else BDF2_SAFE_ALPHA
        alpha = float(rng.uniform(0.02, hi))
    h = float(2.0 ** rng.uniform(-10.0, 0.0))
    d = generate_weights(method, alpha, Kind.DERIVATIVE, h, n)
    _require_admissible(d)
    return d, generate_weights(method, alpha, Kind.INTEGRAL, h, n)


def verify_suite(rng: np.random.Generator, samples: int, method=None, alpha=None) -> SuiteResult:
    """Randomised check of coercivity, the integrated bound and the inverse identity.

    ``method`` and ``alpha`` pin the weight table; a non-admissible choice
    raises :class:`NonAdmissibleError` before any sample is drawn.
    """
    if samples < 0:
        raise ValueError("samples must be nonnegative")
    if method is not None and alpha is not None:
        _require_admissible(generate_weights(method, alpha, Kind.DERIVATIVE, 1.0, 64))
    fails = [0, 0, 0]
    for _ in range(samples):
        n = int(rng.integers(1, 41))
        d, i = _random_table(rng, method, alpha, n)
        dim = int(rng.integers(1, 6))
        y = rng.standard_normal((n + 1, dim)) * 10.0 ** rng.uniform(-3, 3)
        y[0] = 0.0
        if not verify_coercivity(d, y, n).holds:
            fails[0] += 1
        z = np.abs(rng.standard_normal(n + 1)) * 10.0 ** rng.uniform(-3, 3)
        z[0] = 0.0
        dz = np.array([d.w[m::-1] @ z[: m + 1] for m in range(n + 1)])
        G = np.maximum(dz, 0.0) + np.abs(rng.standard_normal(n + 1)) * rng.uniform(0.0, 1.0)
        G[0] = 0.0
        if not verify_integrated_bound(d, i, z, G):
            fails[1] += 1
        if convolution_inverse_defect(d, i) > REL_TOL:
            fails[2] += 1
    return SuiteResult(samples, *fails)
