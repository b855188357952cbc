"""Max-plus scalars, kernels, residuation and semimodule projectors.

Extended reals are IEEE doubles. ``-inf`` is the max-plus zero and absorbs
products even against ``+inf``; residuals follow the min-plus dual
convention where ``+inf`` absorbs. Vectors are 1-D float arrays and kernels
are dense 2-D arrays, entry ``(j, i)`` mapping input ``i`` to output ``j``.
"""
import numpy as np

from ._backend import kernels as _k
from ._kernels_py import mp_divide, mp_times
from .errors import DimensionError

NEG_INF = -np.inf
POS_INF = np.inf

__all__ = [
    "mp_add", "mp_mul", "mp_residuate", "mp_matmul", "identity",
    "kernel_apply", "kernel_residuate", "projector_image",
    "projector_kernel", "projector_image_kernel", "is_leq",
]


def mp_add(a, b):
    """a ⊕ b = max(a, b)."""
    return float(max(a, b))


def mp_mul(a, b):
    """a ⊗ b = a + b, with -inf absorbing."""
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    return float(a + b)


def mp_residuate(a, b):
    """a\\b, the largest x with a ⊗ x <= b."""
    return float(mp_divide(np.float64(a), np.float64(b)))


def identity(n):
    out = np.full((n, n), NEG_INF)
    np.fill_diagonal(out, 0.0)
    return out


def _matrix(A):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.size == 0:
        raise DimensionError(f"expected a non-empty 2-D kernel, got shape {A.shape}")
    return A


def _vector(u, length, what):
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.shape[0] != length:
        raise DimensionError(f"{what}: expected vector of length {length}, got shape {u.shape}")
    return u


def mp_matmul(C, B):
    """Max-plus product (C B)_{ji} = max_k C_jk + B_ki."""
    C, B = _matrix(C), _matrix(B)
    if C.shape[1] != B.shape[0]:
        raise DimensionError(f"cannot compose {C.shape} with {B.shape}")
    return mp_times(C[:, :, None], B[None, :, :]).max(axis=1)


def kernel_apply(A, u):
    """(A u)_j = max_i A_ji + u_i."""
    A = _matrix(A)
    return _k.maxplus_matvec(A, _vector(u, A.shape[1], "kernel_apply"))


def kernel_residuate(A, v):
    """(A\\v)_i = min_j (v_j - A_ji), the largest u with A u <= v."""
    A = _matrix(A)
    return _k.minplus_residuate(A, _vector(v, A.shape[0], "kernel_residuate"))


def projector_image(B, x):
    """Largest element of im B below ``x``: B (B\\x)."""
    return kernel_apply(B, kernel_residuate(B, x))


def projector_kernel(C, x):
    """C\\(C x): smallest element of -im C* above ``x``."""
    return kernel_residuate(C, kernel_apply(C, x))


def projector_image_kernel(B, C, x):
    """Projection on im B parallel to ker C: B ((C B)\\(C x)).

    Equals the largest y in im B with C y <= C x.
    """
    B, C = _matrix(B), _matrix(C)
    x = _vector(x, B.shape[0], "projector_image_kernel")
    CB = mp_matmul(C, B)
    return kernel_apply(B, kernel_residuate(CB, kernel_apply(C, x)))


def is_leq(u, v):
    """Exact componentwise order on extended reals."""
    return bool(np.all(np.asarray(u) <= np.asarray(v)))
