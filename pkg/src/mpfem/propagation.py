"""Time stepping of max-plus coordinates."""
import warnings
from dataclasses import dataclass

import numpy as np

from . import tropical
from .basis import QUADRATIC, RegularGrid
from .errors import ConfigError, DimensionError
from .optimizer import OptimizerConfig, maximize_batch


@dataclass(frozen=True)
class CoordinateVector:
    lam: np.ndarray
    t: float

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        if lam.ndim != 1 or lam.size == 0:
            raise DimensionError("coordinates must be a nonempty vector")
        object.__setattr__(self, "lam", lam)

    def __len__(self):
        return self.lam.size


@dataclass(frozen=True)
class ValueGrid:
    grid: RegularGrid
    values: np.ndarray
    t: float

    @property
    def nodes(self):
        return self.grid.nodes


def initial_coordinates(primal, terminal, X, zero_terminal=False, cfg=None):
    """λ⁰ = W\\φ, coordinatewise inf over X of φ - w_i.

    With ``zero_terminal`` and quadratic elements the value is the squared
    distance from each center to X over 2c; otherwise it comes from
    maximizing w_i - φ over X numerically.
    """
    if zero_terminal and primal.kind == QUADRATIC:
        gap = primal.centers - X.project(primal.centers)
        return CoordinateVector(np.einsum("ik,ik->i", gap, gap) / (2.0 * primal.shape), 0.0)
    probe = np.asarray(terminal(RegularGrid(X, float(np.min(X.upper - X.lower)) / 8).nodes), float)
    if np.all(np.isneginf(probe)):
        raise ConfigError("terminal reward is -inf on X")
    cfg = cfg or OptimizerConfig()
    p, n = len(primal), X.dim
    cols = np.arange(p)
    value = lambda Y, e: primal.values(Y, cols[e]) - np.asarray(terminal(Y), dtype=float)
    lo = np.broadcast_to(X.lower, (p, n))
    hi = np.broadcast_to(X.upper, (p, n))
    hint = X.project(primal.centers)[:, None, :]
    res = maximize_batch(value, None, lo, hi, cfg=cfg, hints=hint)
    # Starts that all meet phi = -inf give an infimum of -inf.
    return CoordinateVector(np.where(res.failed, -np.inf, -res.value), 0.0)


def step(A, B, coords, delta):
    """Maximal λ' with Aλ' <= Bλ."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.shape[1] != len(coords):
        raise DimensionError(f"A {A.shape}, B {B.shape} and {len(coords)} coordinates disagree")
    lam = tropical.kernel_residuate(A, tropical.kernel_apply(B, coords.lam))
    top = np.flatnonzero(np.isposinf(lam))
    if top.size:
        warnings.warn(f"coordinates {top.tolist()} are +inf: no row of A bounds them",
                      RuntimeWarning, stacklevel=2)
    return CoordinateVector(lam, coords.t + delta)


def steps_for(T, delta):
    n = T / delta
    N = int(round(n))
    if abs(n - N) > 1e-9 * max(1.0, abs(n)):
        raise ConfigError(f"T/delta = {n} is not an integer")
    return N


def run(system, coords0, T):
    """All coordinate vectors λ⁰, λ^δ, ..., λ^T."""
    N = steps_for(T, system.delta)
    out = [coords0]
    for _ in range(N):
        out.append(step(system.A, system.B, out[-1], system.delta))
    return out


def reconstruct(primal, coords, grid):
    """v_h^t = max_i (w_i + λ_i) on the nodes of ``grid``."""
    if grid.box.dim != primal.dim:
        raise DimensionError("evaluation grid and family dimensions differ")
    return ValueGrid(grid, primal.combine(coords.lam, grid.nodes), coords.t)
