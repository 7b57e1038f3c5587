# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the time stepper.

Mirrors ``_pykernels`` function for function; ``_backend`` picks one at import.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdlib cimport malloc, free

from .exceptions import SingularMatrixError

cnp.import_array()

cdef double PIVOT_FLOOR = 1e-300


cdef Py_ssize_t _thomas(const double* lower, const double* diag, const double* upper,
                        const double* rhs, double* cp, double* x, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double beta = diag[0]
    if fabs(beta) < PIVOT_FLOOR:
        return 0
    x[0] = rhs[0] / beta
    for i in range(1, n):
        cp[i - 1] = upper[i - 1] / beta
        beta = diag[i] - lower[i - 1] * cp[i - 1]
        if fabs(beta) < PIVOT_FLOOR:
            return i
        x[i] = (rhs[i] - lower[i - 1] * x[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        x[i] -= cp[i] * x[i + 1]
    return -1


cdef Py_ssize_t _solve_p1(double w0, double k, const double* dmean, const double* load,
                          const double* g, double* x, Py_ssize_t M) noexcept nogil:
    """(w0*B + A(d)) x = load - B g on the uniform mesh; returns failing row or -1."""
    cdef double* work = <double*> malloc(3 * M * sizeof(double))
    if work == NULL:
        return -2
    cdef double* off = work
    cdef double* diag = work + M
    cdef double* rhs = work + 2 * M
    cdef double bd = 2.0 * k / 3.0
    cdef double bo = k / 6.0
    cdef double ik = 1.0 / k
    cdef Py_ssize_t p, bad
    for p in range(M):
        diag[p] = w0 * bd + (dmean[p] + dmean[p + 1]) * ik
        rhs[p] = load[p] - bd * g[p]
        if p > 0:
            rhs[p] -= bo * g[p - 1]
        if p < M - 1:
            rhs[p] -= bo * g[p + 1]
            off[p] = w0 * bo - dmean[p + 1] * ik
    bad = _thomas_sym(off, diag, rhs, x, M)
    free(work)
    return bad


cdef Py_ssize_t _thomas_sym(double* off, const double* diag, const double* rhs,
                            double* x, Py_ssize_t n) noexcept nogil:
    """Symmetric tridiagonal solve; ``off`` is overwritten with the modified upper band."""
    cdef Py_ssize_t i
    cdef double beta = diag[0]
    cdef double o
    if fabs(beta) < PIVOT_FLOOR:
        return 0
    x[0] = rhs[0] / beta
    for i in range(1, n):
        o = off[i - 1]
        off[i - 1] = o / beta
        beta = diag[i] - o * off[i - 1]
        if fabs(beta) < PIVOT_FLOOR:
            return i
        x[i] = (rhs[i] - o * x[i - 1]) / beta
    for i in range(n - 2, -1, -1):
        x[i] -= off[i] * x[i + 1]
    return -1


cdef _raise(Py_ssize_t bad):
    if bad == -2:
        raise MemoryError()
    raise SingularMatrixError(f"pivot below {PIVOT_FLOOR:g} at row {bad}")


def thomas(lower, diag, upper, rhs):
    cdef const double[::1] lo = np.ascontiguousarray(lower, dtype=np.float64)
    cdef const double[::1] d = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[::1] up = np.ascontiguousarray(upper, dtype=np.float64)
    cdef const double[::1] r = np.ascontiguousarray(rhs, dtype=np.float64)
    cdef Py_ssize_t n = d.shape[0]
    x = np.empty(n)
    cp = np.empty(max(n - 1, 1))
    cdef double[::1] xv = x
    cdef double[::1] cpv = cp
    cdef const double* lop = &lo[0] if n > 1 else NULL
    cdef const double* upp = &up[0] if n > 1 else NULL
    cdef Py_ssize_t bad
    with nogil:
        bad = _thomas(lop, &d[0], upp, &r[0], &cpv[0], &xv[0], n)
    if bad >= 0:
        _raise(bad)
    return x


def conv_history(const double[::1] w, const double[:, ::1] Y, Py_ssize_t n):
    """sum_{j<n} w[n-j] * Y[j]"""
    cdef Py_ssize_t M = Y.shape[1]
    out = np.zeros(M)
    cdef double[::1] o = out
    with nogil:
        _conv(&w[0], &Y[0, 0], n, M, &o[0])
    return out


cdef void _conv(const double* w, const double* Y, Py_ssize_t n, Py_ssize_t M,
                double* out) noexcept nogil:
    cdef Py_ssize_t j, i
    cdef double c
    cdef const double* row
    for j in range(n):
        c = w[n - j]
        if c == 0.0:
            continue
        row = Y + j * M
        for i in range(M):
            out[i] += c * row[i]


def soe_advance(double[:, ::1] Z, const double[::1] decay, const double[::1] inject,
                const double[::1] v, double[::1] out):
    """Z <- decay*Z + inject (x) v, then out <- column sums of Z."""
    with nogil:
        _soe_advance(&Z[0, 0], &decay[0], &inject[0], &v[0], &out[0], Z.shape[0], Z.shape[1])


cdef void _soe_advance(double* Z, const double* decay, const double* inject, const double* v,
                       double* out, Py_ssize_t Q, Py_ssize_t M) noexcept nogil:
    cdef Py_ssize_t k, i
    cdef double dk, ek
    cdef double* zk
    for i in range(M):
        out[i] = 0.0
    for k in range(Q):
        dk = decay[k]
        ek = inject[k]
        zk = Z + k * M
        for i in range(M):
            zk[i] = dk * zk[i] + ek * v[i]
            out[i] += zk[i]


def solve_cq_system(double w0, double k, const double[::1] dmean,
                    const double[::1] load, const double[::1] g):
    """Solve (w0*B + A(d)) y = load - B g for the uniform P1 mesh.

    ``dmean`` holds the element averages of the diffusivity (M+1 elements).
    """
    cdef Py_ssize_t M = load.shape[0]
    x = np.empty(M)
    cdef double[::1] xv = x
    cdef Py_ssize_t bad
    with nogil:
        bad = _solve_p1(w0, k, &dmean[0], &load[0], &g[0], &xv[0], M)
    if bad != -1:
        _raise(bad)
    return x


def gauss_interp(const double[::1] U, const double[::1] xi, double[:, ::1] out):
    """Values at the element points ``xi`` of the P1 function with interior values U."""
    cdef Py_ssize_t M = U.shape[0]
    cdef Py_ssize_t nq = xi.shape[0]
    cdef Py_ssize_t e, q
    cdef double left, right
    with nogil:
        for e in range(M + 1):
            left = U[e - 1] if e > 0 else 0.0
            right = U[e] if e < M else 0.0
            for q in range(nq):
                out[e, q] = left + (right - left) * xi[q]


def reduce_elements(const double[:, ::1] d, const double[:, ::1] f, const double[::1] wq,
                    const double[::1] xi, double k, double[::1] dmean, double[::1] load):
    """Element means of d and the P1 load vector of f; returns the first
    flat index where d is not positive, or -1."""
    cdef Py_ssize_t E = d.shape[0]
    cdef Py_ssize_t nq = d.shape[1]
    cdef Py_ssize_t e, q
    cdef Py_ssize_t bad = -1
    cdef double s, fl, fr
    with nogil:
        for e in range(E):
            s = 0.0
            fl = 0.0
            fr = 0.0
            for q in range(nq):
                if not d[e, q] > 0.0 and bad < 0:
                    bad = e * nq + q
                s += wq[q] * d[e, q]
                fl += wq[q] * (1.0 - xi[q]) * f[e, q]
                fr += wq[q] * xi[q] * f[e, q]
            dmean[e] = s
            if e > 0:
                load[e - 1] += k * fl
            if e < E - 1:
                load[e] = k * fr
    return bad


def direct_step(const double[::1] w, double[:, ::1] Y, Py_ssize_t n, double k,
                const double[::1] dmean, const double[::1] load):
    """Direct-form step: writes y^n into ``Y[n]``."""
    cdef Py_ssize_t M = Y.shape[1]
    cdef Py_ssize_t bad
    cdef double* g = <double*> malloc(M * sizeof(double))
    if g == NULL:
        raise MemoryError()
    cdef Py_ssize_t i
    with nogil:
        for i in range(M):
            g[i] = 0.0
        _conv(&w[0], &Y[0, 0], n, M, g)
        bad = _solve_p1(w[0], k, &dmean[0], &load[0], g, &Y[n, 0], M)
    free(g)
    if bad != -1:
        _raise(bad)


def velocity_soe_step(double w0, double k, double h, const double[::1] dmean,
                      const double[::1] load, double[::1] y, const double[::1] window,
                      double[:, ::1] R, double[:, ::1] Z, const double[::1] decay,
                      const double[::1] inject, double[::1] tail, bint advance):
    """Velocity-form step with compressed history, updating all state in place.

    On entry ``y`` holds y^{n-1}; on exit y^n.  ``R`` rows are velocities at
    lags 1..n0; ``tail`` is the compressed contribution of older lags.
    """
    cdef Py_ssize_t M = y.shape[0]
    cdef Py_ssize_t n0 = R.shape[0]
    cdef Py_ssize_t Q = Z.shape[0]
    cdef Py_ssize_t i, m, bad
    cdef double ih = 1.0 / h
    cdef double* buf = <double*> malloc(2 * M * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* g = buf
    cdef double* ynew = buf + M
    with nogil:
        for i in range(M):
            g[i] = tail[i] - w0 * y[i]
        for m in range(n0):
            for i in range(M):
                g[i] += window[m] * R[m, i]
        bad = _solve_p1(w0, k, &dmean[0], &load[0], g, ynew, M)
        if bad == -1:
            if advance and Q > 0:
                _soe_advance(&Z[0, 0], &decay[0], &inject[0], &R[n0 - 1, 0], &tail[0], Q, M)
            for m in range(n0 - 1, 0, -1):
                for i in range(M):
                    R[m, i] = R[m - 1, i]
            for i in range(M):
                R[0, i] = (ynew[i] - y[i]) * ih
                y[i] = ynew[i]
    free(buf)
    if bad != -1:
        _raise(bad)
