"""Piecewise-linear finite elements on a uniform 1-D mesh with Dirichlet ends.

Only interior nodes carry unknowns.  Element ``e`` (``0 <= e <= M``) spans
``[x_e, x_{e+1}]``; interior node ``p`` (``0 <= p < M``) sits at ``x_{p+1}``
and touches elements ``p`` and ``p+1``.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import _backend
from .exceptions import AssemblyError

# Gauss-Legendre rules mapped to the reference element [0, 1].
_g2 = 0.5 / np.sqrt(3.0)
GAUSS2 = (np.array([0.5 - _g2, 0.5 + _g2]), np.array([0.5, 0.5]))
_x4, _w4 = np.polynomial.legendre.leggauss(4)
GAUSS4 = (0.5 * (_x4 + 1.0), 0.5 * _w4)


@dataclass(frozen=True)
class Mesh1D:
    a: float
    b: float
    M: int

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("need at least one interior node")
        if not self.b > self.a:
            raise ValueError("empty domain")

    @property
    def k(self) -> float:
        return (self.b - self.a) / (self.M + 1)

    @property
    def nodes(self) -> np.ndarray:
        """All nodes including the two boundary nodes."""
        return self.a + self.k * np.arange(self.M + 2)

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    def quadrature_points(self, xi) -> np.ndarray:
        """Physical coordinates, shape ``(M+1, len(xi))``."""
        return self.a + self.k * (np.arange(self.M + 1)[:, None] + np.asarray(xi)[None, :])

    def interpolate(self, U, xi) -> np.ndarray:
        """Values of the FE function with interior coefficients U at element points xi."""
        full = np.zeros(self.M + 2)
        full[1:-1] = U
        xi = np.asarray(xi)
        return full[:-1, None] * (1.0 - xi)[None, :] + full[1:, None] * xi[None, :]

    def nodal_interpolant(self, g: Callable) -> np.ndarray:
        return np.asarray(g(self.interior), dtype=float)


@dataclass(frozen=True)
class TriDiag:
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = self.diag * x
        y[1:] += self.lower * x[:-1]
        y[:-1] += self.upper * x[1:]
        return y

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)

    def scaled_sum(self, a: float, other: "TriDiag", b: float = 1.0) -> "TriDiag":
        return TriDiag(a * self.lower + b * other.lower, a * self.diag + b * other.diag,
                       a * self.upper + b * other.upper)

    def norm_inf(self) -> float:
        s = np.abs(self.diag).copy()
        s[1:] += np.abs(self.lower)
        s[:-1] += np.abs(self.upper)
        return float(s.max())


@dataclass(frozen=True)
class ProblemSpec:
    """Quasilinear subdiffusion data on ``(a, b)`` with zero initial and boundary values.

    ``D`` and ``f`` are called as ``D(x, t, u)`` with NumPy arrays ``x`` and
    ``u`` of equal shape and must be vectorised.
    """

    alpha: float
    D: Callable
    f: Callable
    exact: Optional[Callable] = None
    a: float = 0.0
    b: float = 1.0
    name: str = "problem"

    def mesh(self, M: int) -> Mesh1D:
        return Mesh1D(self.a, self.b, M)


def assemble_mass(mesh: Mesh1D) -> TriDiag:
    k, M = mesh.k, mesh.M
    off = np.full(M - 1, k / 6.0)
    return TriDiag(off, np.full(M, 2.0 * k / 3.0), off.copy())


def element_diffusivity(mesh: Mesh1D, spec: ProblemSpec, t: float, U_prev) -> np.ndarray:
    """Element averages of D(x, t, u_prev(x)) by the two-point Gauss rule."""
    xi, wq = GAUSS2
    x = mesh.quadrature_points(xi)
    u = mesh.interpolate(U_prev, xi)
    d = np.asarray(spec.D(x, t, u), dtype=float) * np.ones_like(x)
    bad = ~(d > 0.0)
    if bad.any():
        e, q = np.argwhere(bad)[0]
        raise AssemblyError(
            f"diffusivity {d[e, q]!r} is not positive at x={x[e, q]!r}, t={t!r}, u={u[e, q]!r}"
        )
    return d @ wq


def stiffness_from_elements(mesh: Mesh1D, dmean) -> TriDiag:
    k = mesh.k
    off = -dmean[1:-1] / k
    return TriDiag(off, (dmean[:-1] + dmean[1:]) / k, off.copy())


def assemble_stiffness(mesh: Mesh1D, spec: ProblemSpec, t: float, U_prev) -> TriDiag:
    """Stiffness matrix with the coefficient frozen at ``U_prev``."""
    return stiffness_from_elements(mesh, element_diffusivity(mesh, spec, t, U_prev))


def assemble_load(mesh: Mesh1D, spec: ProblemSpec, t: float, U_prev) -> np.ndarray:
    """``(f(., t, u_prev), Phi_p)`` by the two-point Gauss rule per element."""
    xi, wq = GAUSS2
    x = mesh.quadrature_points(xi)
    u = mesh.interpolate(U_prev, xi)
    fv = np.asarray(spec.f(x, t, u), dtype=float) * np.ones_like(x)
    left = mesh.k * (fv * (wq * (1.0 - xi))).sum(axis=1)  # hat of the element's left node
    right = mesh.k * (fv * (wq * xi)).sum(axis=1)
    return right[:-1] + left[1:]


class StepAssembler:
    """Per-step coefficient evaluation with the quadrature geometry cached.

    The returned arrays are reused between calls.
    """

    def __init__(self, mesh: Mesh1D, spec: ProblemSpec):
        self.mesh = mesh
        self.spec = spec
        self._xi, self._wq = GAUSS2
        self._x = mesh.quadrature_points(self._xi)
        self._u = np.zeros_like(self._x)
        self._dmean = np.zeros(mesh.M + 1)
        self._load = np.zeros(mesh.M)

    def _values(self, fn, t):
        v = fn(self._x, t, self._u)
        if np.ndim(v) == 0:
            return np.full(self._x.shape, float(v))
        return np.ascontiguousarray(v, dtype=float)

    def __call__(self, t: float, U_prev):
        """Return ``(dmean, load)`` with D and f frozen at ``U_prev``."""
        _backend.gauss_interp(np.ascontiguousarray(U_prev, dtype=float), self._xi, self._u)
        d = self._values(self.spec.D, t)
        f = self._values(self.spec.f, t)
        bad = _backend.reduce_elements(d, f, self._wq, self._xi, self.mesh.k,
                                       self._dmean, self._load)
        if bad >= 0:
            e, q = divmod(bad, d.shape[1])
            raise AssemblyError(
                f"diffusivity {d[e, q]!r} is not positive at x={self._x[e, q]!r}, t={t!r}, "
                f"u={self._u[e, q]!r}"
            )
        return self._dmean, self._load


def solve_tridiag(A: TriDiag, rhs) -> np.ndarray:
    """Thomas algorithm; raises SingularMatrixError on a vanishing pivot."""
    return _backend.thomas(A.lower, A.diag, A.upper, rhs)


def l2_norm(mesh: Mesh1D, U) -> float:
    U = np.asarray(U, dtype=float)
    return float(np.sqrt(max(U @ assemble_mass(mesh).matvec(U), 0.0)))


def l2_error(mesh: Mesh1D, U, g: Callable) -> float:
    """``||u_h - g||_{L2}`` by the four-point Gauss rule on every element."""
    xi, wq = GAUSS4
    x = mesh.quadrature_points(xi)
    diff = mesh.interpolate(U, xi) - np.asarray(g(x), dtype=float)
    return float(np.sqrt(mesh.k * (diff**2 @ wq).sum()))


def to_csv(mesh: Mesh1D, U, fh=None) -> str | None:
    """Nodal values as ``x,value`` rows including the boundary zeros."""
    buf = io.StringIO() if fh is None else fh
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "value"])
    full = np.zeros(mesh.M + 2)
    full[1:-1] = U
    for x, v in zip(mesh.nodes, full):
        writer.writerow([f"{x:.17g}", f"{v:.17g}"])
    return buf.getvalue() if fh is None else None
