"""Box-constrained concave maximization.

The engine is projected-gradient ascent with an Armijo backtracking line
search along the projection arc, restarted from a coarse lattice of points.
It runs on a *batch* of independent objectives at once: every array carries
one row per (objective, start) pair, and the user callables receive the
objective index of each row. :func:`maximize_concave_box` is the one-objective
front end.

Objectives may contain separable kinks ``-w_k |y_k - κ_k|`` (Lipschitz test
functions). Steps never cross a kink; a coordinate sitting on its kink moves
along the minimal-norm element of the superdifferential, which vanishes at
a kinked maximum, so the stationarity test stays meaningful.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .basis import Box, axis_nodes
from .errors import OptimizerError

ACTIVE, CONVERGED, MAXITER, STALLED, FAILED = 0, 1, 2, 3, 4

_STEP_MIN, _STEP_MAX = 1e-12, 1e12
# Values within this relative band count as equal in the line search, so that
# Barzilai-Borwein steps keep reducing the gradient once f is flat to rounding.
_FLAT = 1e-13


@dataclass(frozen=True)
class OptimizerConfig:
    multistart: int = 3
    max_iter: int = 500
    gtol: float = 1e-8
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    fd_step: float = 1e-6


@dataclass(frozen=True)
class ObjectiveSpec:
    """A function to maximize over ``box``.

    ``value`` maps a point of shape ``(dim,)`` to a float, or a ``(k, dim)``
    array to ``(k,)`` when ``vectorized`` is set; ``gradient`` likewise.
    Without a gradient, central finite differences with step
    ``fd_step * (1 + |y|_inf)`` are used.
    """

    dim: int
    box: Box
    value: Callable
    gradient: Optional[Callable] = None
    kinks: Optional[np.ndarray] = None
    kink_weights: Optional[np.ndarray] = None
    vectorized: bool = False


@dataclass
class OptimizerResult:
    argmax: np.ndarray
    value: float
    iterations: int
    converged: bool
    multistart_spread: float
    diagnostics: list = field(default_factory=list)


@dataclass
class BatchResult:
    argmax: np.ndarray
    value: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    spread: np.ndarray
    failed: np.ndarray
    status: np.ndarray

    def __len__(self):
        return self.value.shape[0]


def lattice_starts(lower, upper, per_axis):
    """Cell-centered lattice of ``per_axis`` points per axis plus the box
    center, as fractions applied to every objective's box.

    Returns ``(E, S, d)``. Degenerate axes (lower == upper) get one value.
    """
    lower = np.atleast_2d(lower)
    upper = np.atleast_2d(upper)
    d = lower.shape[1]
    s = max(int(per_axis), 1)
    frac = (np.arange(s) + 0.5) / s
    grids = np.meshgrid(*([frac] * d), indexing="ij")
    fr = np.stack([g.ravel() for g in grids], axis=1)
    if s % 2 == 0:
        fr = np.vstack([fr, np.full((1, d), 0.5)])
    starts = lower[:, None, :] + fr[None, :, :] * (upper - lower)[:, None, :]
    return starts


def _fd_gradient(value, Y, ent, lo, hi, step):
    n, d = Y.shape
    g = np.zeros_like(Y)
    h = step * (1.0 + np.abs(Y).max(axis=1))
    for k in range(d):
        yp = Y.copy()
        ym = Y.copy()
        yp[:, k] = np.minimum(Y[:, k] + h, hi[:, k])
        ym[:, k] = np.maximum(Y[:, k] - h, lo[:, k])
        width = yp[:, k] - ym[:, k]
        ok = width > 0
        if np.any(ok):
            g[ok, k] = (value(yp[ok], ent[ok]) - value(ym[ok], ent[ok])) / width[ok]
    return g


def _direction(g, y, kinks, weights, fixed):
    d = g
    if kinks is not None:
        on = y == kinks
        if np.any(on):
            shrunk = np.sign(g) * np.maximum(np.abs(g) - weights, 0.0)
            d = np.where(on, shrunk, g)
    if fixed is not None:
        d = np.where(fixed, 0.0, d)
    return d


def _trial(y, d, s, lo, hi, kinks):
    yt = y + s[:, None] * d
    if kinks is not None:
        side = np.sign(y - kinks)
        crossed = (side != 0) & (np.sign(yt - kinks) == -side)
        yt = np.where(crossed, kinks, yt)
    return np.clip(yt, lo, hi)


def ascend(value, gradient, lower, upper, starts, entries, kinks=None, weights=None, cfg=None):
    """Run projected-gradient ascent on every row of ``starts``.

    ``value(Y, entries)`` and ``gradient(Y, entries)`` receive the objective
    index of each row. Returns per-row ``(y, f, iterations, status)`` where
    ``y`` is the best iterate found.
    """
    cfg = cfg or OptimizerConfig()
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    y = np.clip(np.array(starts, dtype=float), lo, hi)
    entries = np.asarray(entries)
    n = y.shape[0]
    fixed = lo == hi
    fixed = fixed if np.any(fixed) else None
    if kinks is not None:
        kinks = np.asarray(kinks, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if not np.isfinite(kinks).any():
            kinks = weights = None

    def grad(Y, idx):
        if gradient is None:
            return _fd_gradient(value, Y, entries[idx], lo[idx], hi[idx], cfg.fd_step)
        return gradient(Y, entries[idx])

    status = np.zeros(n, dtype=np.int8)
    iters = np.zeros(n, dtype=np.int64)
    f = np.asarray(value(y, entries), dtype=float)
    status[~np.isfinite(f)] = FAILED
    g = np.zeros_like(y)
    ok = status == ACTIVE
    if np.any(ok):
        g[ok] = grad(y[ok], np.flatnonzero(ok))
    s = np.ones(n)
    best_y, best_f = y.copy(), f.copy()

    while True:
        idx = np.flatnonzero(status == ACTIVE)
        if idx.size == 0:
            break
        yk, fk, gk = y[idx], f[idx], g[idx]
        kk = None if kinks is None else kinks[idx]
        wk = None if weights is None else weights[idx]
        fx = None if fixed is None else fixed[idx]
        d = _direction(gk, yk, kk, wk, fx)
        pg = np.clip(yk + d, lo[idx], hi[idx]) - yk
        done = np.linalg.norm(pg, axis=1) <= cfg.gtol * (1.0 + np.abs(fk))
        status[idx[done]] = CONVERGED
        over = ~done & (iters[idx] >= cfg.max_iter)
        status[idx[over]] = MAXITER
        keep = ~(done | over)
        idx, yk, fk, gk, d = idx[keep], yk[keep], fk[keep], gk[keep], d[keep]
        if idx.size == 0:
            break
        kk = None if kinks is None else kinks[idx]
        sk = s[idx].copy()
        new_y = yk.copy()
        new_f = fk.copy()
        accepted = np.zeros(idx.size, dtype=bool)
        pending = np.arange(idx.size)
        for _ in range(cfg.max_backtracks):
            kp = None if kk is None else kk[pending]
            yt = _trial(yk[pending], d[pending], sk[pending], lo[idx[pending]], hi[idx[pending]], kp)
            ft = np.asarray(value(yt, entries[idx[pending]]), dtype=float)
            bad = ~np.isfinite(ft)
            if np.any(bad):
                status[idx[pending[bad]]] = FAILED
            gain = np.einsum("ij,ij->i", d[pending], yt - yk[pending])
            flat = _FLAT * (1.0 + np.abs(fk[pending]))
            good = ~bad & (ft >= fk[pending] + cfg.armijo * gain - flat)
            hit = pending[good]
            new_y[hit] = yt[good]
            new_f[hit] = ft[good]
            accepted[hit] = True
            pending = pending[~good & ~bad]
            if pending.size == 0:
                break
            sk[pending] *= cfg.backtrack
        stalled = ~accepted & (status[idx] == ACTIVE)
        status[idx[stalled]] = STALLED
        acc = np.flatnonzero(accepted)
        if acc.size == 0:
            continue
        rows = idx[acc]
        g_new = grad(new_y[acc], rows)
        sy = new_y[acc] - yk[acc]
        gy = g_new - gk[acc]
        curv = -np.einsum("ij,ij->i", sy, gy)
        ss = np.einsum("ij,ij->i", sy, sy)
        with np.errstate(divide="ignore", invalid="ignore"):
            bb = np.where(curv > 0, ss / curv, 2.0 * sk[acc])
        s[rows] = np.clip(bb, _STEP_MIN, _STEP_MAX)
        y[rows] = new_y[acc]
        f[rows] = new_f[acc]
        g[rows] = g_new
        iters[rows] += 1
        up = new_f[acc] > best_f[rows]
        best_y[rows[up]] = new_y[acc][up]
        best_f[rows[up]] = new_f[acc][up]
    return best_y, best_f, iters, status


def maximize_batch(value, gradient, lower, upper, kinks=None, weights=None,
                   cfg=None, hints=None):
    """Maximize ``E`` objectives, each over its own box ``lower[e], upper[e]``.

    Starts are the lattice of :func:`lattice_starts` plus optional
    ``hints`` of shape ``(E, h, d)``.
    """
    cfg = cfg or OptimizerConfig()
    lower = np.atleast_2d(np.asarray(lower, dtype=float))
    upper = np.atleast_2d(np.asarray(upper, dtype=float))
    E, d = lower.shape
    starts = lattice_starts(lower, upper, cfg.multistart)
    if hints is not None:
        starts = np.concatenate([starts, np.asarray(hints, dtype=float).reshape(E, -1, d)], axis=1)
    S = starts.shape[1]
    entries = np.repeat(np.arange(E), S)
    rep = lambda a: None if a is None else np.repeat(np.atleast_2d(a), S, axis=0)
    y, f, it, st = ascend(value, gradient, rep(lower), rep(upper), starts.reshape(E * S, d),
                          entries, rep(kinks), rep(weights), cfg)
    f = f.reshape(E, S)
    st = st.reshape(E, S)
    valid = (st != FAILED) & np.isfinite(f)
    masked = np.where(valid, f, -np.inf)
    best = masked.argmax(axis=1)
    rows = np.arange(E)
    failed = ~valid.any(axis=1)
    with np.errstate(invalid="ignore"):
        spread = np.where(failed, np.nan,
                          masked.max(axis=1) - np.where(valid, f, np.inf).min(axis=1))
    return BatchResult(
        argmax=y.reshape(E, S, d)[rows, best],
        value=np.where(failed, np.nan, masked[rows, best]),
        iterations=it.reshape(E, S)[rows, best],
        converged=st[rows, best] == CONVERGED,
        spread=spread,
        failed=failed,
        status=st,
    )


def _spec_callables(obj):
    if obj.vectorized:
        value = lambda Y, e: np.asarray(obj.value(Y), dtype=float)
        grad = None if obj.gradient is None else (lambda Y, e: np.asarray(obj.gradient(Y), dtype=float))
    else:
        value = lambda Y, e: np.array([obj.value(y) for y in Y], dtype=float)
        grad = None if obj.gradient is None else (
            lambda Y, e: np.array([obj.gradient(y) for y in Y], dtype=float).reshape(Y.shape))
    return value, grad


_STATUS_NAMES = {CONVERGED: "converged", MAXITER: "iteration limit", STALLED: "line search stalled",
                 FAILED: "non-finite objective"}


def maximize_concave_box(obj, cfg=None, hints=None):
    """Maximize one objective; raises ``OptimizerError`` if every start fails."""
    cfg = cfg or OptimizerConfig()
    value, grad = _spec_callables(obj)
    kinks = None if obj.kinks is None else np.asarray(obj.kinks, dtype=float)[None, :]
    weights = None if obj.kink_weights is None else np.asarray(obj.kink_weights, dtype=float)[None, :]
    h = None if hints is None else np.asarray(hints, dtype=float).reshape(1, -1, obj.dim)
    res = maximize_batch(value, grad, obj.box.lower[None, :], obj.box.upper[None, :],
                         kinks, weights, cfg, h)
    diagnostics = [f"start {k}: {_STATUS_NAMES[int(c)]}" for k, c in enumerate(res.status[0])
                   if c != CONVERGED]
    if res.failed[0]:
        raise OptimizerError("all starts failed: " + "; ".join(diagnostics))
    return OptimizerResult(
        argmax=res.argmax[0],
        value=float(res.value[0]),
        iterations=int(res.iterations[0]),
        converged=bool(res.converged[0]),
        multistart_spread=float(res.spread[0]),
        diagnostics=diagnostics,
    )


def maximize_on_grid(obj, step, chunk=1 << 16):
    """Exhaustive search over the lattice of spacing ``step`` (box corners
    included). A certification oracle, not a production path."""
    axes = [axis_nodes(lo, hi, step) for lo, hi in zip(obj.box.lower, obj.box.upper)]
    shape = tuple(len(a) for a in axes)
    total = int(np.prod(shape))
    value, _ = _spec_callables(obj)
    best_v, best_i = -np.inf, 0
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, shape)
        Y = np.stack([axes[k][idx[k]] for k in range(len(axes))], axis=1)
        v = value(Y, None)
        k = int(np.argmax(v))
        if v[k] > best_v:
            best_v, best_i = float(v[k]), int(flat[k])
    idx = np.unravel_index(best_i, shape)
    argmax = np.array([axes[k][idx[k]] for k in range(len(axes))])
    return OptimizerResult(argmax, best_v, total, True, 0.0)
