# cython: language_level=3
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs, floor

cnp.import_array()

QUADRATIC = 0
LIPSCHITZ = 1


cdef inline double _times(double a, double b) noexcept nogil:
    if a == -INFINITY or b == -INFINITY:
        return -INFINITY
    return a + b


cdef inline double _divide(double a, double b) noexcept nogil:
    if a == -INFINITY or b == INFINITY:
        return INFINITY
    if a == INFINITY:
        return -INFINITY
    return b - a


cdef void _matvec(const double[:, ::1] A, const double[::1] u, double[::1] out) noexcept nogil:
    cdef Py_ssize_t q = A.shape[0], p = A.shape[1], j, i
    cdef double best, s
    for j in range(q):
        best = -INFINITY
        for i in range(p):
            s = _times(A[j, i], u[i])
            if s > best:
                best = s
        out[j] = best


cdef void _residuate(const double[:, ::1] A, const double[::1] v, double[::1] out) noexcept nogil:
    cdef Py_ssize_t q = A.shape[0], p = A.shape[1], j, i
    cdef double r
    for i in range(p):
        out[i] = INFINITY
    for j in range(q):
        for i in range(p):
            r = _divide(A[j, i], v[j])
            if r < out[i]:
                out[i] = r


def maxplus_matvec(A, u):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[::1] x = np.ascontiguousarray(u, dtype=np.float64)
    out = np.empty(a.shape[0])
    cdef double[::1] o = out
    with nogil:
        _matvec(a, x, o)
    return out


def minplus_residuate(A, v):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[::1] y = np.ascontiguousarray(v, dtype=np.float64)
    out = np.empty(a.shape[1])
    cdef double[::1] o = out
    with nogil:
        _residuate(a, y, o)
    return out


def fe_step(A, B, lam):
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[::1] x = np.ascontiguousarray(lam, dtype=np.float64)
    mid = np.empty(b.shape[0])
    out = np.empty(a.shape[1])
    cdef double[::1] m = mid
    cdef double[::1] o = out
    with nogil:
        _matvec(b, x, m)
        _residuate(a, m, o)
    return out


def envelope(points, centers, coeffs, int kind, double shape):
    cdef const double[:, ::1] x = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(np.atleast_2d(centers), dtype=np.float64)
    cdef const double[::1] lam = np.ascontiguousarray(coeffs, dtype=np.float64)
    cdef Py_ssize_t m = x.shape[0], p = c.shape[0], n = c.shape[1], r, i, k
    cdef double best, acc, d, scale
    out = np.empty(m)
    cdef double[::1] o = out
    with nogil:
        # Same operation order as the numpy fallback, for bit-identical output.
        scale = 2.0 * shape
        for r in range(m):
            best = -INFINITY
            for i in range(p):
                if lam[i] == -INFINITY:
                    continue
                acc = 0.0
                for k in range(n):
                    d = x[r, k] - c[i, k]
                    if kind == 0:
                        acc += d * d
                    else:
                        acc += fabs(d)
                if kind == 0:
                    acc = -acc / scale + lam[i]
                else:
                    acc = -(shape * acc) + lam[i]
                if acc > best:
                    best = acc
            o[r] = best
    return out


def multilinear_interp(values, lower, step, points):
    vals = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = vals.ndim
    cdef const double[::1] flat = vals.ravel()
    cdef const double[::1] lo = np.ascontiguousarray(lower, dtype=np.float64)
    cdef const double[::1] h = np.ascontiguousarray(step, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
    cdef cnp.int64_t[::1] counts = np.array(vals.shape, dtype=np.int64)
    cdef cnp.int64_t[::1] strides = np.ones(n, dtype=np.int64)
    cdef cnp.int64_t[::1] base = np.zeros(n, dtype=np.int64)
    cdef double[::1] frac = np.zeros(n)
    cdef Py_ssize_t m = x.shape[0], r, k, corner
    cdef cnp.int64_t idx, b
    cdef double s, w, acc
    for k in range(n - 2, -1, -1):
        strides[k] = strides[k + 1] * counts[k + 1]
    out = np.empty(m)
    cdef double[::1] o = out
    with nogil:
        for r in range(m):
            for k in range(n):
                s = (x[r, k] - lo[k]) / h[k]
                if s < 0.0:
                    s = 0.0
                elif s > counts[k] - 1:
                    s = counts[k] - 1
                b = <cnp.int64_t>floor(s)
                if b > counts[k] - 2:
                    b = counts[k] - 2
                if b < 0:
                    b = 0
                base[k] = b
                frac[k] = s - b
            acc = 0.0
            for corner in range(1 << n):
                w = 1.0
                idx = 0
                for k in range(n):
                    if (corner >> k) & 1:
                        w *= frac[k]
                        idx += (base[k] + 1) * strides[k]
                    else:
                        w *= 1.0 - frac[k]
                        idx += base[k] * strides[k]
                if w != 0.0:
                    acc += w * flat[idx]
            o[r] = acc
    return out
