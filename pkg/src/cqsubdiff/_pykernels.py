"""Pure-Python/NumPy versions of the compiled kernels in ``_ckernels``."""
import numpy as np

from .exceptions import SingularMatrixError

PIVOT_FLOOR = 1e-300


def thomas(lower, diag, upper, rhs):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = np.asarray(diag, dtype=float)
    r = np.asarray(rhs, dtype=float)
    n = d.shape[0]
    x = np.empty(n)
    cp = np.empty(max(n - 1, 1))
    beta = d[0]
    if abs(beta) < PIVOT_FLOOR:
        raise SingularMatrixError(f"pivot below {PIVOT_FLOOR:g} at row 0")
    x[0] = r[0] / beta
    for i in range(1, n):
        cp[i - 1] = upper[i - 1] / beta
        beta = d[i] - lower[i - 1] * cp[i - 1]
        if abs(beta) < PIVOT_FLOOR:
            raise SingularMatrixError(f"pivot below {PIVOT_FLOOR:g} at row {i}")
        x[i] = (r[i] - lower[i - 1] * x[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return x


def conv_history(w, Y, n):
    """sum_{j<n} w[n-j] * Y[j]"""
    if n == 0:
        return np.zeros(Y.shape[1])
    return w[n:0:-1] @ Y[:n]


def soe_advance(Z, decay, inject, v, out):
    """Z <- decay*Z + inject (x) v, then out <- column sums of Z."""
    Z *= decay[:, None]
    Z += inject[:, None] * v[None, :]
    Z.sum(axis=0, out=out)


def solve_cq_system(w0, k, dmean, load, g):
    """Solve (w0*B + A(d)) y = load - B g for the uniform P1 mesh."""
    bd, bo = 2.0 * k / 3.0, k / 6.0
    diag = w0 * bd + (dmean[:-1] + dmean[1:]) / k
    off = w0 * bo - dmean[1:-1] / k
    rhs = load - bd * g
    rhs[1:] -= bo * g[:-1]
    rhs[:-1] -= bo * g[1:]
    return thomas(off, diag, off, rhs)


def gauss_interp(U, xi, out):
    """Values at the element points ``xi`` of the P1 function with interior values U."""
    full = np.zeros(len(U) + 2)
    full[1:-1] = U
    out[...] = full[:-1, None] + (full[1:] - full[:-1])[:, None] * xi[None, :]


def reduce_elements(d, f, wq, xi, k, dmean, load):
    """Element means of d and the P1 load vector of f; returns the first
    flat index where d is not positive, or -1."""
    dmean[:] = d @ wq
    fl = f @ (wq * (1.0 - xi))
    fr = f @ (wq * xi)
    load[:] = k * (fr[:-1] + fl[1:])
    bad = np.flatnonzero(~(d > 0.0).ravel())
    return int(bad[0]) if bad.size else -1


def direct_step(w, Y, n, k, dmean, load):
    """Direct-form step: writes y^n into ``Y[n]``."""
    Y[n] = solve_cq_system(w[0], k, dmean, load, conv_history(w, Y, n))


def velocity_soe_step(w0, k, h, dmean, load, y, window, R, Z, decay, inject, tail, advance):
    """Velocity-form step with compressed history, updating all state in place."""
    g = window @ R + tail - w0 * y
    ynew = solve_cq_system(w0, k, dmean, load, g)
    if advance and Z.shape[0]:
        soe_advance(Z, decay, inject, R[-1], tail)
    R[1:] = R[:-1]
    R[0] = (ynew - y) / h
    y[:] = ynew
