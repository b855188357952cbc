"""Pure numpy implementations of the hot kernels.

Signatures and infinity conventions match the compiled ``_kernels`` module
exactly; the test suite checks both backends against each other.
"""
import numpy as np

QUADRATIC = 0
LIPSCHITZ = 1

_CHUNK = 1 << 22


def mp_times(a, b):
    """Elementwise max-plus product with -inf absorbing, +inf otherwise."""
    with np.errstate(invalid="ignore"):
        out = np.add(a, b)
    absorbed = np.isneginf(a) | np.isneginf(b)
    if np.any(absorbed):
        out = np.where(absorbed, -np.inf, out)
    return out


def mp_divide(a, b):
    """Elementwise residual a\\b = max{x : a + x <= b}."""
    with np.errstate(invalid="ignore"):
        out = np.subtract(b, a)
    top = np.isneginf(a) | np.isposinf(b)
    bottom = np.isposinf(a) & ~np.isposinf(b)
    if np.any(top) or np.any(bottom):
        out = np.where(top, np.inf, np.where(bottom, -np.inf, out))
    return out


def _rows_per_chunk(cols):
    return max(1, _CHUNK // max(cols, 1))


def maxplus_matvec(A, u):
    A = np.asarray(A, dtype=float)
    u = np.asarray(u, dtype=float)
    q, p = A.shape
    out = np.empty(q)
    step = _rows_per_chunk(p)
    for s in range(0, q, step):
        out[s:s + step] = mp_times(A[s:s + step], u[None, :]).max(axis=1, initial=-np.inf)
    return out


def minplus_residuate(A, v):
    A = np.asarray(A, dtype=float)
    v = np.asarray(v, dtype=float)
    q, p = A.shape
    out = np.full(p, np.inf)
    step = _rows_per_chunk(p)
    for s in range(0, q, step):
        block = mp_divide(A[s:s + step], v[s:s + step, None]).min(axis=0, initial=np.inf)
        np.minimum(out, block, out=out)
    return out


def fe_step(A, B, lam):
    return minplus_residuate(A, maxplus_matvec(B, lam))


def envelope(points, centers, coeffs, kind, shape):
    """max_i (w_i(x) + coeffs_i) at every row x of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    coeffs = np.asarray(coeffs, dtype=float)
    m, p = points.shape[0], centers.shape[0]
    out = np.empty(m)
    step = _rows_per_chunk(p * centers.shape[1])
    for s in range(0, m, step):
        diff = points[s:s + step, None, :] - centers[None, :, :]
        if kind == QUADRATIC:
            w = -np.einsum("mpk,mpk->mp", diff, diff) / (2.0 * shape)
        else:
            w = -shape * np.abs(diff).sum(axis=2)
        out[s:s + step] = mp_times(w, coeffs[None, :]).max(axis=1, initial=-np.inf)
    return out


def multilinear_interp(values, lower, step, points):
    """Interpolate a uniform-grid array at ``points``, clamping to the grid box."""
    values = np.asarray(values, dtype=float)
    lower = np.asarray(lower, dtype=float)
    step = np.asarray(step, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = values.ndim
    counts = np.array(values.shape)
    flat = values.ravel()
    strides = np.ones(n, dtype=np.int64)
    for k in range(n - 2, -1, -1):
        strides[k] = strides[k + 1] * counts[k + 1]
    s = (points - lower) / step
    s = np.clip(s, 0.0, counts - 1)
    base = np.minimum(np.floor(s).astype(np.int64), counts - 2)
    base = np.maximum(base, 0)
    frac = s - base
    out = np.zeros(points.shape[0])
    for corner in range(1 << n):
        weight = np.ones(points.shape[0])
        index = np.zeros(points.shape[0], dtype=np.int64)
        for k in range(n):
            if (corner >> k) & 1:
                weight = weight * frac[:, k]
                index += (base[:, k] + 1) * strides[k]
            else:
                weight = weight * (1.0 - frac[:, k])
                index += base[:, k] * strides[k]
        out += np.where(weight != 0.0, weight * flat[index], 0.0)
    return out
