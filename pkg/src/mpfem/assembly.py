"""Mass and stiffness matrices of the max-plus finite element method.

The mass matrix holds the scalar products <z_j, w_i> over X. The stiffness
matrix holds, for each pair, the maximum over X×U of

    z_j(x) + w_i(x + δ f(x, u)) + δ ℓ(x, u),

computed by batched concave maximization. For state-constrained problems the
foot point is projected onto X, and problems with an absorbing boundary add
the maximum over each face of X using the boundary branch.
"""
import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import LIPSCHITZ, QUADRATIC, evaluate, gradient, gram_argmax, gram_matrix, scalar_product
from .errors import AssemblyError, ConfigError, DimensionError
from .io import read_matrix, write_matrix
from .optimizer import OptimizerConfig, maximize_batch
from .problem import delta0

DEFAULT_CHUNK = 50_000


@dataclass
class AssembledSystem:
    A: np.ndarray
    B: np.ndarray
    delta: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.A.shape != self.B.shape:
            raise DimensionError(f"A is {self.A.shape} but B is {self.B.shape}")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")


def assemble_mass(test, primal, X):
    if test.dim != primal.dim or test.dim != X.dim:
        raise DimensionError("families and box must share the state dimension")
    try:
        return gram_matrix(test, primal, X)
    except ConfigError:
        A = np.empty((len(test), len(primal)))
        for j in range(len(test)):
            for i in range(len(primal)):
                A[j, i] = scalar_product(test[j], primal[i], X)
        return A


# --- one-step objective ----------------------------------------------------

def _clip_jacobian(xi, lower, upper, gw):
    """Superdifferential-aware derivative of the projection onto the box.
    It is the identity strictly inside. On a face it passes ``gw`` only when
    ``gw`` points back into the box."""
    inside = (xi > lower) & (xi < upper)
    at_lo = (xi == lower) & (gw > 0)
    at_hi = (xi == upper) & (gw < 0)
    return (inside | at_lo | at_hi).astype(float)


class OneStep:
    """Vectorized value and gradient of z(x) + w(ξ) + δℓ(x, u) with
    ξ = x + δf(x, u), for rows paired with (test, primal) element indices.

    ``test`` may be None (no z term), which gives the pointwise one-step
    approximation of the semigroup.
    """

    def __init__(self, problem, branch, delta, primal, test=None, X=None):
        self.p, self.br, self.delta = problem, branch, float(delta)
        self.primal, self.test = primal, test
        self.n, self.m = problem.n, problem.m
        self.X = X or problem.X
        self.has_gradient = (branch.dynamics_jacobian is not None
                             and branch.lagrangian_gradient is not None)

    def _foot(self, x, u):
        xi = x + self.delta * self.br.dynamics(x, u)
        if self.p.state_constrained:
            return xi, self.X.project(xi)
        return xi, xi

    def value(self, x, u, rows, cols):
        _, xc = self._foot(x, u)
        v = self.primal.values(xc, cols) + self.delta * self.br.lagrangian(x, u)
        if self.test is not None:
            v = v + self.test.values(x, rows)
        return v

    def gradient(self, x, u, rows, cols):
        xi, xc = self._foot(x, u)
        gw = self.primal.gradients(xc, cols)
        if self.p.state_constrained:
            gw = gw * _clip_jacobian(xi, self.X.lower, self.X.upper, gw)
        Fx, Fu = self.br.dynamics_jacobian(x, u)
        lx, lu = self.br.lagrangian_gradient(x, u)
        d = self.delta
        gx = gw + d * np.einsum("kab,ka->kb", Fx, gw) + d * lx
        gu = d * np.einsum("kab,ka->kb", Fu, gw) + d * lu
        if self.test is not None:
            gx = gx + self.test.gradients(x, rows)
        return gx, gu


def one_step_value(problem, branch, z, w, delta, y):
    """z(x) + w(x + δf(x, u)) + δℓ(x, u) at rows ``y = (x, u)``, for single
    elements ``z`` and ``w`` (``z`` may be None)."""
    y = np.atleast_2d(np.asarray(y, dtype=float))
    x, u = y[:, :problem.n], y[:, problem.n:]
    xi = x + delta * branch.dynamics(x, u)
    if problem.state_constrained:
        xi = problem.X.project(xi)
    v = evaluate(w, xi) + delta * branch.lagrangian(x, u)
    if z is not None:
        v = v + evaluate(z, x)
    return v


def _batch_callables(obj, rows, cols, fix_x=None):
    n = obj.n

    def split(Y, e):
        if fix_x is None:
            return Y[:, :n], Y[:, n:]
        return fix_x[e], Y

    def value(Y, e):
        x, u = split(Y, e)
        return obj.value(x, u, None if rows is None else rows[e], cols[e])

    if not obj.has_gradient:
        return value, None

    def grad(Y, e):
        x, u = split(Y, e)
        gx, gu = obj.gradient(x, u, None if rows is None else rows[e], cols[e])
        return gu if fix_x is not None else np.concatenate([gx, gu], axis=1)

    return value, grad


def _branch_boxes(problem, E, face=None):
    """Per-entry joint boxes for the interior (``face=None``) or one face
    ``(axis, side)`` of X."""
    xl, xu = problem.X.lower.copy(), problem.X.upper.copy()
    if face is not None:
        k, side = face
        xl[k] = xu[k] = (problem.X.lower if side == 0 else problem.X.upper)[k]
    lo = np.concatenate([xl, problem.U.lower])
    hi = np.concatenate([xu, problem.U.upper])
    return np.broadcast_to(lo, (E, lo.size)), np.broadcast_to(hi, (E, hi.size))


def _solve_chunk(problem, test, primal, delta, rows, cols, cfg, branches):
    """Best value over branches for the entries ``(rows[e], cols[e])``."""
    E = rows.size
    n = problem.n
    best = np.full(E, -np.inf)
    iters = np.zeros(E, dtype=np.int64)
    spread = np.zeros(E)
    conv = np.zeros(E, dtype=bool)
    kinks = weights = None
    if test.kind == LIPSCHITZ:
        kinks = np.concatenate([test.centers[rows], np.full((E, problem.m), np.nan)], axis=1)
        weights = np.concatenate([np.full((E, n), test.shape), np.zeros((E, problem.m))], axis=1)
    x0 = gram_argmax(test, primal, problem.X, rows, cols)
    u0 = np.broadcast_to(problem.U.center, (E, problem.m))
    for branch, face in branches:
        obj = OneStep(problem, branch, delta, primal, test)
        value, grad = _batch_callables(obj, rows, cols)
        lo, hi = _branch_boxes(problem, E, face)
        hint = np.clip(np.concatenate([x0, u0], axis=1), lo, hi)[:, None, :]
        res = maximize_batch(value, grad, lo, hi, kinks, weights, cfg, hint)
        if np.any(res.failed):
            e = int(np.flatnonzero(res.failed)[0])
            raise AssemblyError(f"every optimizer start failed for entry ({rows[e]}, {cols[e]})",
                                entry=(int(rows[e]), int(cols[e])))
        win = res.value > best
        best = np.where(win, res.value, best)
        iters = np.where(win, res.iterations, iters)
        spread = np.where(win, res.spread, spread)
        conv = np.where(win, res.converged, conv)
    return best, iters, spread, conv


def _branches(problem):
    out = [(problem.interior, None)]
    if problem.boundary is not None:
        out += [(problem.boundary, (k, side)) for k in range(problem.n) for side in (0, 1)]
    return out


def prune_mask(A, threshold):
    """Pairs kept by locality pruning: <z_j, w_i> within ``threshold`` of
    the row maximum."""
    if threshold is None or not np.isfinite(threshold):
        return np.ones(A.shape, dtype=bool)
    return A >= A.max(axis=1, keepdims=True) - threshold


def _run_entries(solve, rows, cols, chunk, threads):
    spans = [(s, min(s + chunk, rows.size)) for s in range(0, rows.size, chunk)]
    if threads <= 1 or len(spans) <= 1:
        parts = [solve(rows[a:b], cols[a:b]) for a, b in spans]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: solve(rows[ab[0]:ab[1]], cols[ab[0]:ab[1]]), spans))
    return [np.concatenate(x) for x in zip(*parts)] if parts else [np.empty(0)] * 4


def assemble_stiffness_direct(problem, test, primal, delta, cfg=None, smoothness=None,
                              prune=None, mass=None, chunk=DEFAULT_CHUNK, threads=1):
    """Stiffness matrix, shape ``(q, p)``, plus per-entry diagnostics.

    ``prune`` is the locality threshold on mass-matrix values (None keeps
    every pair); skipped entries are set to -inf.
    Returns ``(B, metadata)``.
    """
    if not delta > 0:
        raise ConfigError("delta must be positive")
    cfg = cfg or OptimizerConfig()
    q, p = len(test), len(primal)
    keep = np.ones((q, p), dtype=bool)
    if prune is not None:
        if mass is None:
            mass = assemble_mass(test, primal, problem.X)
        keep = prune_mask(mass, prune)
    rows, cols = np.nonzero(keep)
    branches = _branches(problem)
    solve = lambda r, c: _solve_chunk(problem, test, primal, delta, r, c, cfg, branches)
    val, it, sp, cv = _run_entries(solve, rows, cols, chunk, threads)
    B = np.full((q, p), -np.inf)
    B[rows, cols] = val
    iterations = np.zeros((q, p), dtype=np.int64)
    spread = np.zeros((q, p))
    converged = np.ones((q, p), dtype=bool)
    iterations[rows, cols] = it
    spread[rows, cols] = sp
    converged[rows, cols] = cv
    certified = bool(smoothness is not None and problem.smooth and problem.boundary is None
                     and delta <= delta0(smoothness))
    meta = {"iterations": iterations, "spread": spread, "converged": converged,
            "certified": certified, "pruned": int(q * p - rows.size), "entries": int(rows.size)}
    return B, meta


def assemble_stiffness_hamiltonian(problem, H, test, primal, delta, cfg=None,
                                   chunk=DEFAULT_CHUNK, threads=1):
    """Entries sup over X of z_j(x) + w_i(x) + δ H(x, ∇w_i(x))."""
    if primal.kind != QUADRATIC:
        raise ConfigError("the Hamiltonian variant needs differentiable (quadratic) primal elements")
    if not delta > 0:
        raise ConfigError("delta must be positive")
    cfg = cfg or OptimizerConfig()
    q, p = len(test), len(primal)
    rows, cols = np.nonzero(np.ones((q, p), dtype=bool))
    n = problem.n

    def solve(r, c):
        E = r.size
        value = lambda Y, e: (test.values(Y, r[e]) + primal.values(Y, c[e])
                              + delta * H(Y, primal.gradients(Y, c[e])))
        kinks = weights = None
        if test.kind == LIPSCHITZ:
            kinks = test.centers[r]
            weights = np.full((E, n), test.shape)
        lo = np.broadcast_to(problem.X.lower, (E, n))
        hi = np.broadcast_to(problem.X.upper, (E, n))
        hint = gram_argmax(test, primal, problem.X, r, c)[:, None, :]
        res = maximize_batch(value, None, lo, hi, kinks, weights, cfg, hint)
        if np.any(res.failed):
            e = int(np.flatnonzero(res.failed)[0])
            raise AssemblyError(f"every optimizer start failed for entry ({r[e]}, {c[e]})",
                                entry=(int(r[e]), int(c[e])))
        return res.value, res.iterations, res.spread, res.converged

    val, it, sp, cv = _run_entries(solve, rows, cols, chunk, threads)
    return val.reshape(q, p), {"iterations": it.reshape(q, p), "spread": sp.reshape(q, p),
                               "converged": cv.reshape(q, p), "certified": False,
                               "pruned": 0, "entries": q * p}


class _Single:
    """One element behind the indexed family interface."""

    def __init__(self, w):
        self.w = w

    def values(self, x, index):
        return evaluate(self.w, x)

    def gradients(self, x, index):
        return gradient(self.w, x)


def approximate_semigroup(problem, w, delta, points, cfg=None, chunk=DEFAULT_CHUNK):
    """Pointwise one-step approximation sup over U of w(x + δf) + δℓ at
    every row of ``points``, for one element ``w``."""
    cfg = cfg or OptimizerConfig()
    w = _Single(w)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(pts.shape[0])
    m = problem.m
    for s in range(0, pts.shape[0], chunk):
        x = pts[s:s + chunk]
        E = x.shape[0]
        edge = problem.on_boundary(x) if problem.boundary is not None else np.zeros(E, bool)
        for flag, branch in ((False, problem.interior), (True, problem.boundary)):
            sel = np.flatnonzero(edge == flag)
            if sel.size == 0:
                continue
            obj = OneStep(problem, branch, delta, w)
            cols = np.zeros(sel.size, dtype=np.int64)
            value, grad = _batch_callables(obj, None, cols, fix_x=x[sel])
            lo = np.broadcast_to(problem.U.lower, (sel.size, m))
            hi = np.broadcast_to(problem.U.upper, (sel.size, m))
            res = maximize_batch(value, grad, lo, hi, cfg=cfg)
            out[s + sel] = res.value
    return out


# --- cache -------------------------------------------------------------------

def _family_key(f):
    return (f.kind, float(f.shape), f.grid.box.key(), float(f.grid.step))


def cache_key(problem, test, primal, delta, cfg, prune, variant="direct"):
    text = repr((problem.key(), _family_key(test), _family_key(primal), float(delta),
                 cfg, prune, variant))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:24]


def save_system(directory, sys):
    os.makedirs(directory, exist_ok=True)
    write_matrix(os.path.join(directory, "A.csv"), sys.A)
    write_matrix(os.path.join(directory, "B.csv"), sys.B)
    with open(os.path.join(directory, "delta.txt"), "w", encoding="utf-8") as fh:
        fh.write("%.17g\n" % sys.delta)


def load_system(directory):
    A = read_matrix(os.path.join(directory, "A.csv"))
    B = read_matrix(os.path.join(directory, "B.csv"))
    with open(os.path.join(directory, "delta.txt"), encoding="utf-8") as fh:
        delta = float(fh.read())
    return AssembledSystem(A, B, delta, {"cached": True})


def assemble(problem, test, primal, delta, cfg=None, smoothness=None, prune=None,
             variant="direct", cache_dir=None, chunk=DEFAULT_CHUNK, threads=1):
    """Mass and stiffness matrices, read from or written to ``cache_dir``
    when given."""
    cfg = cfg or OptimizerConfig()
    path = None
    if cache_dir is not None:
        path = os.path.join(cache_dir, cache_key(problem, test, primal, delta, cfg, prune, variant))
        if os.path.exists(os.path.join(path, "delta.txt")):
            return load_system(path)
    A = assemble_mass(test, primal, problem.X)
    if variant == "direct":
        B, meta = assemble_stiffness_direct(problem, test, primal, delta, cfg, smoothness,
                                            prune, A, chunk, threads)
    elif variant == "hamiltonian":
        if problem.hamiltonian is None:
            raise ConfigError(f"problem {problem.name!r} has no Hamiltonian")
        B, meta = assemble_stiffness_hamiltonian(problem, problem.hamiltonian, test, primal,
                                                 delta, cfg, chunk, threads)
    else:
        raise ConfigError(f"unknown assembly variant {variant!r}")
    sys = AssembledSystem(A, B, float(delta), meta)
    if path is not None:
        save_system(path, sys)
    return sys
