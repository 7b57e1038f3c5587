"""Compressed evaluation of the fractional-integral history sum.

For BDF1 the weights of ``(delta(zeta)/h)**-beta`` have the Laplace-type
representation

    w_m = h**beta / (Gamma(beta) Gamma(1-beta)) * int_0^inf (e^u - 1)**-beta e^{-m u} du,

obtained from the resolvent integral of ``s**-beta`` along the branch cut.
Discretising ``u`` gives ``w_m ~ sum_k c_k exp(-u_k m)``, so every lag beyond a
short exact window is carried by one decaying auxiliary vector per node.

Node layout: Gauss-Jacobi (weight ``u**-beta``) on ``[0, a]`` with ``a ~ 1/N``,
then Gauss-Legendre panels in ``log u`` up to the cutoff where
``exp(-(n0+1) u)`` is negligible.  The number of nodes per panel is raised
until every tail weight is reproduced to relative accuracy ``epsilon``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, roots_jacobi

from . import _backend
from .cq import Kind, Method, WeightTable

EPS_MIN = 1e-14
EPS_MAX = 1e-4
PANEL_WIDTH = 3.0  # panel length in log(u)
_FULL_CHECK_LIMIT = 1 << 17


@dataclass(frozen=True)
class SoeQuadrature:
    rates: np.ndarray  # u_k
    coefs: np.ndarray  # c_k, including h**beta
    n0: int
    N: int
    max_rel_error: float

    @property
    def size(self) -> int:
        return len(self.rates)

    def weights(self, m) -> np.ndarray:
        m = np.atleast_1d(np.asarray(m, dtype=float))
        return np.exp(-np.outer(m, self.rates)) @ self.coefs


_SMALL_LAG = 64
_BERN = (1.0, -0.5, 1 / 6, 0.0, -1 / 30, 0.0, 1 / 42, 0.0, -1 / 30, 0.0, 5 / 66, 0.0, -691 / 2730)


def _bernoulli_poly(n: int, x: float) -> float:
    return sum(math.comb(n, k) * _BERN[k] * x ** (n - k) for k in range(n + 1))


def _log_gamma_ratio(z, beta):
    """``log Gamma(z+beta) - log Gamma(z+1)`` for large z, without cancellation."""
    out = (beta - 1.0) * np.log(z)
    for k in range(1, 12):
        c = (-1) ** (k + 1) * (_bernoulli_poly(k + 1, beta) - _bernoulli_poly(k + 1, 1.0))
        out = out + c / (k * (k + 1)) / z**k
    return out


def exact_integral_weights(beta: float, h: float, m) -> np.ndarray:
    """BDF1 weights of the order-beta fractional integral, ``h**beta Gamma(m+beta)/(Gamma(beta) m!)``.

    Small lags use the product formula; large lags an asymptotic expansion of
    the log-Gamma ratio, accurate to a few ulps where ``gammaln`` differences
    lose digits.
    """
    m = np.asarray(m, dtype=float)
    out = np.empty(m.shape)
    small = m <= _SMALL_LAG
    j = np.arange(1, _SMALL_LAG + 1, dtype=float)
    table = np.concatenate([[1.0], np.cumprod((j - 1.0 + beta) / j)])
    out[small] = table[m[small].astype(np.int64)]
    big = ~small
    out[big] = np.exp(_log_gamma_ratio(m[big], beta) - gammaln(beta))
    return h**beta * out


def _check_indices(n0: int, N: int) -> np.ndarray:
    if N - n0 <= _FULL_CHECK_LIMIT:
        return np.arange(n0 + 1, N + 1)
    dense = np.arange(n0 + 1, n0 + 1025)
    sparse = np.unique(np.geomspace(n0 + 1025, N, 8192).astype(np.int64))
    return np.concatenate([dense, sparse])


def _nodes(beta, N, n0, epsilon, q, q0):
    a = 1.0 / N
    u_max = (math.log(1.0 / epsilon) + 4.0) / (n0 + 1)
    x, w = roots_jacobi(q0, 0.0, -beta)  # weight (1+x)**-beta on [-1, 1]
    u0 = 0.5 * a * (x + 1.0)
    w0 = w * (0.5 * a) ** (1.0 - beta) * (np.expm1(u0) / u0) ** -beta
    rates, coefs = [u0], [w0]
    lo, hi = math.log(a), math.log(u_max)
    if hi > lo:
        panels = max(1, math.ceil((hi - lo) / PANEL_WIDTH))
        edges = np.linspace(lo, hi, panels + 1)
        xg, wg = np.polynomial.legendre.leggauss(q)
        for left, right in zip(edges[:-1], edges[1:]):
            half = 0.5 * (right - left)
            u = np.exp(half * xg + left + half)
            rates.append(u)
            coefs.append(half * wg * u * np.expm1(u) ** -beta)
    scale = math.exp(-gammaln(beta) - gammaln(1.0 - beta))
    return np.concatenate(rates), scale * np.concatenate(coefs)


def soe_quadrature(alpha: float, h: float, N: int, n0: int = 5, epsilon: float = 1e-8) -> SoeQuadrature:
    """Exponential sum for the order ``1-alpha`` integral weights at lags ``n0 < m <= N``."""
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    if epsilon < EPS_MIN:
        raise ValueError(f"epsilon={epsilon:g} is below {EPS_MIN:g}, unreachable in double precision")
    if epsilon > EPS_MAX:
        raise ValueError(f"epsilon={epsilon:g} exceeds {EPS_MAX:g}")
    if n0 < 2:
        raise ValueError("n0 must be at least 2")
    beta = 1.0 - alpha
    if N <= n0:
        empty = np.empty(0)
        return SoeQuadrature(empty, empty, n0, N, 0.0)
    m = _check_indices(n0, N)
    exact = exact_integral_weights(beta, 1.0, m)
    for q in range(4, 41):
        rates, coefs = _nodes(beta, N, n0, epsilon, q, max(4, q // 2))
        approx = np.exp(-np.outer(m, rates)) @ coefs
        err = float(np.max(np.abs(approx - exact) / exact))
        if err <= epsilon:
            return SoeQuadrature(rates, coefs * h**beta, n0, N, err)
    raise ArithmeticError(f"could not reach epsilon={epsilon:g} (best {err:.3g})")


class CompressedHistory:
    """Running evaluation of ``H^n = sum_{j<n} w[n-j] v_j`` for an integral table.

    Lags ``1..n0`` use the stored weights; older terms live in ``Q`` auxiliary
    vectors.  Memory is ``O((Q + n0) M)`` independent of the step count.
    """

    def __init__(self, int_weights: WeightTable, M: int, n0: int = 5,
                 epsilon: float = 1e-8, N: int | None = None):
        if int_weights.kind is not Kind.INTEGRAL or int_weights.method is not Method.BDF1:
            raise ValueError("compressed history needs a BDF1 integral table")
        N = int_weights.N if N is None else N
        alpha = 1.0 - int_weights.alpha
        self.quad = soe_quadrature(alpha, int_weights.h, N, n0, epsilon)
        self.n0 = n0
        self.M = M
        self.window = np.array(int_weights.w[1 : n0 + 1])
        r = self.quad.rates
        self.decay = np.exp(-r)
        self.inject = self.quad.coefs * np.exp(-r * (n0 + 1))
        self.Z = np.zeros((self.quad.size, M))
        self.tail = np.zeros(M)
        self.recent = np.zeros((n0, M))  # row i holds the velocity at lag i+1
        self.pushed = 0
        self.ops = 0  # multiply-adds spent, for complexity instrumentation

    @property
    def aux_state_count(self) -> int:
        return self.quad.size

    def evaluate(self) -> np.ndarray:
        self.ops += (self.n0 + 1) * self.M
        return self.window @ self.recent + self.tail

    def push(self, v) -> None:
        """Record ``v_n`` once step n is complete."""
        R = self.recent
        if self.pushed >= self.n0 and self.quad.size:
            _backend.soe_advance(self.Z, self.decay, self.inject, R[-1], self.tail)
            self.ops += 2 * self.quad.size * self.M
        R[1:] = R[:-1]
        R[0] = v
        self.pushed += 1


def history_fast(int_weights: WeightTable, v_history, n: int, n0: int = 5,
                 epsilon: float = 1e-8) -> np.ndarray:
    """Compressed approximation of ``sum_{j=0}^{n-1} w[n-j] v_j``.

    ``v_history[0]`` must be zero (velocity of a sequence starting at rest).
    """
    v = np.asarray(v_history, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if n < 1 or n > len(v):
        raise IndexError(f"n={n} out of range")
    if np.any(v[0] != 0.0):
        raise ValueError("v_history[0] must vanish")
    hist = CompressedHistory(int_weights, v.shape[1], n0=n0, epsilon=epsilon)
    for j in range(1, n):
        hist.push(v[j])
    return hist.evaluate()
