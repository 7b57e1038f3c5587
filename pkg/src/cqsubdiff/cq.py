"""Convolution quadrature weights for the Caputo derivative and fractional integral.

The weights are the Taylor coefficients of ``(delta(zeta)/h)**(+-alpha)`` where
``delta`` is the generating polynomial of BDF1 or BDF2.  The L1 scheme is
provided in the same table layout as a baseline.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import gamma

__all__ = [
    "Method",
    "Kind",
    "WeightTable",
    "Admissibility",
    "generate_weights",
    "bdf2_weight_closed_form",
    "l1_weights",
    "check_admissible",
    "partial_sums_defect",
    "partial_sums",
    "apply_discrete_operator",
    "binomial_series",
]


class Method(enum.Enum):
    BDF1 = "bdf1"
    BDF2 = "bdf2"
    L1 = "l1"

    @property
    def symbol(self) -> tuple[float, ...]:
        """Coefficients of delta(zeta) in ascending powers (empty for L1)."""
        return {
            Method.BDF1: (1.0, -1.0),
            Method.BDF2: (1.5, -2.0, 0.5),
            Method.L1: (),
        }[self]

    @classmethod
    def parse(cls, value: "str | Method") -> "Method":
        if isinstance(value, Method):
            return value
        key = str(value).strip().lower()
        aliases = {"euler": "bdf1", "be": "bdf1"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown quadrature method {value!r}") from None


class Kind(enum.Enum):
    DERIVATIVE = "derivative"
    INTEGRAL = "integral"

    @property
    def sign(self) -> int:
        return 1 if self is Kind.DERIVATIVE else -1

    @classmethod
    def parse(cls, value: "str | Kind") -> "Kind":
        if isinstance(value, Kind):
            return value
        return cls(str(value).strip().lower())


@dataclass(frozen=True)
class WeightTable:
    """Weights ``w[0..N]`` of a discrete fractional operator.

    For ``Kind.DERIVATIVE`` the operator is ``sum_j w[n-j] y[j]`` and the
    weights carry units ``h**-alpha``; integral tables carry ``h**alpha``.
    """

    kind: Kind
    method: Method
    alpha: float
    h: float
    w: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @property
    def N(self) -> int:
        return len(self.w) - 1

    def __len__(self) -> int:
        return len(self.w)

    def __getitem__(self, j):
        return self.w[j]

    def to_csv(self, fh=None, comments=()) -> str | None:
        """Write ``j,w`` rows with 17 significant digits.

        ``comments`` are emitted first as ``# ...`` lines.  Returns the text
        when ``fh`` is None.
        """
        buf = io.StringIO() if fh is None else fh
        for line in comments:
            buf.write(f"# {line}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["j", "w"])
        for j, wj in enumerate(self.w):
            writer.writerow([j, f"{wj:.17g}"])
        if fh is None:
            return buf.getvalue()
        return None

    @staticmethod
    def read_csv_values(fh) -> np.ndarray:
        rows = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
        reader = csv.DictReader(rows)
        return np.array([float(r["w"]) for r in reader])


class Admissibility(NamedTuple):
    admissible: bool
    first_violation: int | None


def _check_common(alpha, h, N):
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if not h > 0.0:
        raise ValueError(f"time step must be positive, got {h}")
    if N < 0:
        raise ValueError(f"N must be nonnegative, got {N}")


def binomial_series(gamma_: float, N: int) -> np.ndarray:
    """First N+1 Taylor coefficients of ``(1 - zeta)**gamma_``."""
    j = np.arange(1, N + 1, dtype=float)
    a = np.empty(N + 1)
    a[0] = 1.0
    a[1:] = np.cumprod((j - 1.0 - gamma_) / j)
    return a


def generate_weights(method, alpha: float, kind, h: float, N: int) -> WeightTable:
    """CQ weights of ``(delta(zeta)/h)**(s*alpha)`` with ``s = +1`` or ``-1``.

    BDF1 uses the binomial recurrence.  BDF2 factors the symbol as
    ``0.5*(1-zeta)*(3-zeta)`` and forms the Cauchy product of the two binomial
    expansions.
    """
    method = Method.parse(method)
    kind = Kind.parse(kind)
    _check_common(alpha, h, N)
    gexp = kind.sign * alpha
    a = binomial_series(gexp, N)
    if method is Method.BDF1:
        w = a
    elif method is Method.BDF2:
        b = a * 3.0 ** -np.arange(N + 1, dtype=float)
        w = 1.5 ** gexp * np.convolve(a, b)[: N + 1]
    else:
        raise ValueError("generate_weights supports BDF1 and BDF2; use l1_weights for L1")
    return WeightTable(kind, method, float(alpha), float(h), h ** -gexp * w)


def bdf2_weight_closed_form(alpha: float, j: int, h: float = 1.0) -> float:
    """BDF2 derivative weight via the terminating hypergeometric sum.

    ``(-1)^j 2^-a 3^(a-j) C(a, j) 2F1(-j, -a; 1-j+a; 3) h^-a``.  The 2F1 series
    is summed left to right with ratio updates; it stops at ``k = j``.
    """
    if j < 0:
        raise ValueError("j must be nonnegative")
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if not h > 0.0:
        raise ValueError("h must be positive")
    # (-1)^j C(alpha, j) 3^-j built up factor by factor.
    lead = 1.0
    for i in range(j):
        lead *= -(alpha - i) / ((i + 1) * 3.0)
    terms = [lead]
    t = lead
    c = 1.0 - j + alpha
    for k in range(j):
        t *= 3.0 * (k - j) * (k - alpha) / ((c + k) * (k + 1))
        terms.append(t)
    return 2.0 ** -alpha * 3.0 ** alpha * math.fsum(terms) * h ** -alpha


def l1_weights(alpha: float, h: float, N: int) -> WeightTable:
    """L1 discretisation of the Caputo derivative in convolution form.

    With ``b_j = (j+1)^(1-a) - j^(1-a)`` the L1 formula is
    ``h^-a/Gamma(2-a) * sum_j b_j (y[n-j] - y[n-j-1])``; regrouping by ``y``
    gives ``w_0 = s``, ``w_j = s (b_j - b_{j-1})``.  The coefficient of ``y[0]``
    differs from ``w_n``, which is harmless because ``y[0] = 0`` throughout.
    """
    _check_common(alpha, h, N)
    j = np.arange(N + 1, dtype=float)
    b = (j + 1.0) ** (1.0 - alpha) - j ** (1.0 - alpha)
    b[0] = 1.0
    w = np.empty(N + 1)
    w[0] = 1.0
    w[1:] = np.diff(b)
    scale = h ** -alpha / gamma(2.0 - alpha)
    return WeightTable(Kind.DERIVATIVE, Method.L1, float(alpha), float(h), scale * w)


def check_admissible(table: WeightTable) -> Admissibility:
    """Sign condition: ``w[0] > 0`` and ``w[j] < 0`` for ``1 <= j <= N``."""
    if table.kind is not Kind.DERIVATIVE:
        raise ValueError("admissibility applies to derivative tables")
    w = table.w
    if not w[0] > 0.0:
        return Admissibility(False, 0)
    bad = np.flatnonzero(w[1:] >= 0.0)
    if bad.size:
        return Admissibility(False, int(bad[0]) + 1)
    return Admissibility(True, None)


def partial_sums(table: WeightTable) -> np.ndarray:
    return np.cumsum(table.w)


def partial_sums_defect(table: WeightTable, n: int) -> float:
    """S_n = w_0 + ... + w_n (nonnegative and decreasing for admissible tables)."""
    if table.kind is not Kind.DERIVATIVE:
        raise ValueError("partial sums defect is defined for derivative tables")
    if not 0 <= n <= table.N:
        raise IndexError(f"n={n} outside 0..{table.N}")
    return math.fsum(table.w[: n + 1])


def apply_discrete_operator(table: WeightTable, seq, n: int) -> np.ndarray:
    """Return ``sum_{j=0}^n w[n-j] * seq[j]`` (vector-valued if seq is 2-D)."""
    seq = np.asarray(seq, dtype=float)
    if not 0 <= n < len(seq):
        raise IndexError(f"n={n} outside the sequence (length {len(seq)})")
    if n > table.N:
        raise IndexError(f"n={n} exceeds table length {table.N + 1}")
    return table.w[n::-1] @ seq[: n + 1]
