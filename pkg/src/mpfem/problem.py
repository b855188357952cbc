"""Benchmark control problems with their value-function oracles.

All problem callables are vectorized over leading axes: ``dynamics(x, u)``
takes ``x`` of shape ``(..., n)`` and ``u`` of shape ``(..., m)`` and returns
``(..., n)``; ``lagrangian`` returns ``(...)``; ``terminal(x)`` returns
``(...)``.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .basis import Box
from .errors import ConfigError


@dataclass(frozen=True)
class Branch:
    """Smooth pieces (f, ℓ) of a problem on one region, with optional
    derivatives ``dynamics_jacobian(x, u) -> (df/dx, df/du)`` and
    ``lagrangian_gradient(x, u) -> (dℓ/dx, dℓ/du)``."""

    dynamics: Callable
    lagrangian: Callable
    dynamics_jacobian: Optional[Callable] = None
    lagrangian_gradient: Optional[Callable] = None


def zero_terminal(x):
    return np.zeros(np.shape(x)[:-1])


@dataclass(frozen=True)
class SmoothnessData:
    """Constants bounding the Hessians of w and ℓ and the Jacobians of an
    affine f, as needed for the concavity threshold."""

    F: np.ndarray
    G: np.ndarray
    alpha: float
    beta: float
    C: float

    def __post_init__(self):
        for name in ("alpha", "beta", "C"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        if not (np.all(np.isfinite(F)) and np.all(np.isfinite(G))):
            raise ConfigError("F and G must be finite")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "G", G)


@dataclass(frozen=True)
class ControlProblem:
    """Maximize ∫ ℓ(x, u) ds + φ(x(T)) subject to x' = f(x, u), x ∈ X, u ∈ U.

    ``interior`` gives f and ℓ on X (extended continuously to its closure).
    When ``boundary`` is set, points of ∂X follow that branch instead, which
    is how absorbing boundaries are described. ``state_constrained`` means
    trajectories cannot leave X: one-step foot points are projected onto X.
    """

    name: str
    X: Box
    U: Box
    T: float
    interior: Branch
    terminal: Callable = zero_terminal
    boundary: Optional[Branch] = None
    state_constrained: bool = False
    smooth: bool = True
    hamiltonian: Optional[Callable] = None
    boundary_tol: float = 1e-12
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError(f"horizon must be positive, got {self.T}")

    @property
    def n(self):
        return self.X.dim

    @property
    def m(self):
        return self.U.dim

    @property
    def terminal_is_zero(self):
        return self.terminal is zero_terminal

    def on_boundary(self, x):
        x = np.asarray(x, dtype=float)
        tol = self.boundary_tol
        return np.any((x <= self.X.lower + tol) | (x >= self.X.upper - tol), axis=-1)

    def _dispatch(self, attr, x, u):
        inner = getattr(self.interior, attr)(x, u)
        if self.boundary is None:
            return inner
        edge = self.on_boundary(x)
        if not np.any(edge):
            return inner
        outer = getattr(self.boundary, attr)(x, u)
        if np.ndim(inner) > np.ndim(edge):
            edge = edge[..., None]
        return np.where(edge, outer, inner)

    def dynamics(self, x, u):
        return self._dispatch("dynamics", np.asarray(x, float), np.asarray(u, float))

    def lagrangian(self, x, u):
        return self._dispatch("lagrangian", np.asarray(x, float), np.asarray(u, float))

    def key(self):
        """Stable description used for cache keys."""
        return (self.name, self.X.key(), self.U.key(), float(self.T),
                tuple(sorted((k, repr(v)) for k, v in self.params.items())))


@dataclass(frozen=True)
class OracleValue:
    kind: str
    evaluator: Callable

    def __call__(self, x, t):
        return self.evaluator(np.asarray(x, dtype=float), t)


# --- linear quadratic benchmark -------------------------------------------

def lq_problem(dim=2, x_half_width=1.0, u_half_width=3.0, T=5.0, state_weight=1.0):
    """ℓ = -q|x|²/2 - |u|²/2, f = u, φ = 0 on truncated boxes.

    The untruncated problem lives on the whole space; the boxes only bound
    the computation. ``state_weight`` is q (1 for the benchmark).
    """
    q = float(state_weight)

    def f(x, u):
        return np.broadcast_to(u, np.broadcast_shapes(np.shape(x), np.shape(u))).copy()

    def f_jac(x, u):
        lead = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return (np.zeros(lead + (dim, dim)),
                np.broadcast_to(np.eye(dim), lead + (dim, dim)).copy())

    def ell(x, u):
        return -0.5 * q * np.sum(x * x, axis=-1) - 0.5 * np.sum(u * u, axis=-1)

    def ell_grad(x, u):
        lead = np.broadcast_shapes(np.shape(x), np.shape(u))
        return np.broadcast_to(-q * x, lead).copy(), np.broadcast_to(-u, lead).copy()

    def hamiltonian(x, p):
        # sup over unbounded controls of ℓ + p·u, attained at u = p
        return -0.5 * q * np.sum(x * x, axis=-1) + 0.5 * np.sum(p * p, axis=-1)

    return ControlProblem(
        name="lq",
        X=Box.cube(dim, x_half_width),
        U=Box.cube(dim, u_half_width),
        T=T,
        interior=Branch(f, ell, f_jac, ell_grad),
        hamiltonian=hamiltonian,
        params={"dim": dim, "x_half_width": x_half_width, "u_half_width": u_half_width,
                "state_weight": q},
    )


def lq_smoothness(c, dim=2, state_weight=1.0):
    """Constants for quadratic elements of Hessian 1/c on the LQ instance."""
    q = abs(state_weight)
    return SmoothnessData(F=np.zeros((dim, dim)), G=np.eye(dim), alpha=1.0,
                          beta=1.0 / c, C=max(1.0 / c, q))


def lq_oracle(state_weight=1.0):
    """v(x, t) = -√q tanh(√q t) |x|²/2, from the Riccati ODE p' = q - p²."""
    q = float(state_weight)
    if q <= 0:
        raise ConfigError("the closed-form LQ value needs a positive state weight")
    r = np.sqrt(q)

    def v(x, t):
        return -0.5 * r * np.tanh(r * t) * np.sum(x * x, axis=-1)

    return OracleValue("lq", v)


# --- distance benchmark ---------------------------------------------------

def distance_problem(dim=2, T=1.0):
    """Minimum time to reach ∂X for x' = u, |u|_∞ <= 1, X = [-1, 1]^n.

    ℓ = -1 and f = u inside, ℓ = 0 and f = 0 on the boundary, where the state
    is absorbed.
    """
    def f_in(x, u):
        return np.broadcast_to(u, np.broadcast_shapes(np.shape(x), np.shape(u))).copy()

    def f_in_jac(x, u):
        lead = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return (np.zeros(lead + (dim, dim)),
                np.broadcast_to(np.eye(dim), lead + (dim, dim)).copy())

    def ell_in(x, u):
        return -np.ones(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]))

    def f_out(x, u):
        return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(u)))

    def f_out_jac(x, u):
        lead = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return np.zeros(lead + (dim, dim)), np.zeros(lead + (dim, dim))

    def ell_out(x, u):
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]))

    def ell_zero_grad(x, u):
        lead = np.broadcast_shapes(np.shape(x), np.shape(u))
        return np.zeros(lead), np.zeros(lead)

    return ControlProblem(
        name="distance",
        X=Box.cube(dim, 1.0),
        U=Box.cube(dim, 1.0),
        T=T,
        interior=Branch(f_in, ell_in, f_in_jac, ell_zero_grad),
        boundary=Branch(f_out, ell_out, f_out_jac, ell_zero_grad),
        state_constrained=True,
        smooth=False,
        params={"dim": dim},
    )


def distance_oracle():
    """v(x, t) = -min(t, 1 - |x|_∞)."""
    def v(x, t):
        return -np.minimum(t, 1.0 - np.max(np.abs(x), axis=-1))

    return OracleValue("distance", v)


def degenerate_problem(X, element, T=1.0, m=1):
    """ℓ ≡ 0 and f ≡ 0 with terminal reward equal to ``element``: the value
    function never moves."""
    n = X.dim

    def f(x, u):
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]) + (n,))

    def f_jac(x, u):
        lead = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return np.zeros(lead + (n, n)), np.zeros(lead + (n, m))

    def ell(x, u):
        return np.zeros(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]))

    def ell_grad(x, u):
        lead = np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1])
        return np.zeros(lead + (n,)), np.zeros(lead + (m,))

    return ControlProblem(
        name="degenerate", X=X, U=Box.cube(m, 1.0), T=T,
        interior=Branch(f, ell, f_jac, ell_grad),
        terminal=element,
        hamiltonian=lambda x, p: np.zeros(np.shape(x)[:-1]),
        params={"center": tuple(np.asarray(element.center).tolist()),
                "kind": element.kind, "shape": element.shape},
    )


PROBLEMS = {"lq": lq_problem, "distance": distance_problem}
ORACLES = {"lq": lq_oracle, "distance": distance_oracle}


def make_problem(name, **overrides):
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**overrides)


def make_oracle(problem):
    if problem.name == "lq":
        return lq_oracle(problem.params.get("state_weight", 1.0))
    if problem.name == "distance":
        return distance_oracle()
    if problem.name == "degenerate":
        term = problem.terminal
        return OracleValue("degenerate", lambda x, t: term(x))
    raise ConfigError(f"no oracle for problem {problem.name!r}")


# --- concavity -------------------------------------------------------------

def delta0(s):
    """Time step below which z(x) + w(x + δf) + δℓ is jointly concave."""
    if not (s.alpha > 0 and s.beta > 0 and s.C > 0):
        raise ConfigError("smoothness constants must be strictly positive")
    nF = float(np.linalg.norm(s.F, 2))
    nG = float(np.linalg.norm(s.G, 2))
    ab, C = s.alpha * s.beta, s.C
    d1 = 3 * C**2 * nF**2 * nG**2
    d2 = 6 * C**2 * nF * nG * (1 + nG)
    d3 = 3 * C * (C * (1 + nG) ** 2 + s.alpha * (1 + 2 * nF))
    terms = [np.cbrt(ab / d1) if d1 > 0 else np.inf,
             np.sqrt(ab / d2) if d2 > 0 else np.inf,
             ab / d3]
    return float(min(terms))


@dataclass
class ConcavityReport:
    passed: bool
    worst_violation: float
    samples: int
    tolerance: float


def verify_concavity(problem, w, z, delta, samples=10_000, seed=0, rtol=1e-10):
    """Sample midpoints in X×U and check midpoint concavity of
    (x, u) ↦ z(x) + w(x + δf(x, u)) + δℓ(x, u)."""
    if delta < 0:
        raise ConfigError("delta must be nonnegative")
    from .assembly import one_step_value

    rng = np.random.default_rng(seed)
    lo = np.concatenate([problem.X.lower, problem.U.lower])
    hi = np.concatenate([problem.X.upper, problem.U.upper])
    y1 = rng.uniform(lo, hi, size=(samples, lo.size))
    y2 = rng.uniform(lo, hi, size=(samples, lo.size))
    mid = 0.5 * (y1 + y2)
    b = lambda y: one_step_value(problem, problem.interior, z, w, delta, y)
    b1, b2, bm = b(y1), b(y2), b(mid)
    violation = 0.5 * (b1 + b2) - bm
    scale = 1.0 + np.max(np.abs(np.concatenate([b1, b2, bm])))
    tol = rtol * scale
    worst = float(np.max(violation))
    return ConcavityReport(worst <= tol, worst, samples, tol)
