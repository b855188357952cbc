"""Dense-grid semi-Lagrangian dynamic programming.

A validation oracle for the closed-form value functions and for the
one-step operator. Values live on a uniform state grid with multilinear
interpolation. Controls are sampled on a lattice of U and refined by local
zooming. Foot points use Heun or Euler steps and are projected onto the
computational domain, which is the state-constraint semantics when the
domain is X.
"""
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels as _k
from .basis import Box, axis_nodes
from .errors import ConfigError

_CHUNK = 1 << 20


def uniform_axes(box, step):
    """Per-axis uniform nodes with spacing at most ``step`` spanning ``box``."""
    axes = []
    for lo, hi in zip(box.lower, box.upper):
        count = int(np.ceil((hi - lo) / step - 1e-9)) + 1
        axes.append(np.linspace(lo, hi, max(count, 2)))
    return axes


@dataclass
class DPSolution:
    axes: list
    times: list
    values: list = field(repr=False)

    @property
    def lower(self):
        return np.array([a[0] for a in self.axes])

    @property
    def step(self):
        return np.array([a[1] - a[0] for a in self.axes])

    @property
    def nodes(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def at(self, t):
        for s, v in zip(self.times, self.values):
            if abs(s - t) <= 1e-9 * max(1.0, abs(t)):
                return v
        raise KeyError(f"time {t} was not recorded; have {self.times}")

    def evaluate(self, points, t):
        return _k.multilinear_interp(self.at(t), self.lower, self.step,
                                     np.atleast_2d(np.asarray(points, dtype=float)))


def _control_lattice(U, step):
    axes = [axis_nodes(lo, hi, step) for lo, hi in zip(U.lower, U.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _zoom_offsets(m, points, spacing):
    base = np.linspace(-spacing, spacing, points)
    mesh = np.meshgrid(*([base] * m), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


class _Stage:
    """One substep of length ``tau`` from the value ``prev`` (an array on the
    grid, or a callable for the exact terminal reward)."""

    def __init__(self, problem, domain, lower, step, tau, scheme, prev):
        self.p, self.domain, self.lower, self.step = problem, domain, lower, step
        self.tau, self.scheme, self.prev = tau, scheme, prev

    def _next(self, y):
        y = self.domain.project(y)
        if callable(self.prev):
            return self.prev(y)
        return _k.multilinear_interp(self.prev, self.lower, self.step, y)

    def __call__(self, x, u):
        p, tau = self.p, self.tau
        k1 = p.dynamics(x, u)
        if self.scheme == "euler":
            return tau * p.lagrangian(x, u) + self._next(x + tau * k1)
        xe = self.domain.project(x + tau * k1)
        k2 = p.dynamics(xe, u)
        y = x + 0.5 * tau * (k1 + k2)
        xm = self.domain.project(x + 0.5 * tau * k1)
        run = (p.lagrangian(x, u) + 4.0 * p.lagrangian(xm, u) + p.lagrangian(self.domain.project(y), u)) / 6.0
        return tau * run + self._next(y)


def _best_controls(stage, x, controls, U):
    """Max over a fixed control set for each node row of ``x``."""
    k, K = x.shape[0], controls.shape[0]
    xr = np.repeat(x, K, axis=0)
    ur = np.tile(controls, (k, 1))
    vals = stage(xr, ur).reshape(k, K)
    best = vals.argmax(axis=1)
    return vals[np.arange(k), best], controls[best]


def _zoom(stage, x, u0, v0, offsets, U):
    k, K = x.shape[0], offsets.shape[0]
    cand = U.project(u0[:, None, :] + offsets[None, :, :]).reshape(k * K, -1)
    vals = stage(np.repeat(x, K, axis=0), cand).reshape(k, K)
    best = vals.argmax(axis=1)
    vb = vals[np.arange(k), best]
    better = vb > v0
    u = np.where(better[:, None], cand.reshape(k, K, -1)[np.arange(k), best], u0)
    return np.where(better, vb, v0), u


def solve_dp(problem, horizon, state_step, time_step, control_step, domain=None,
             scheme="heun", zoom_levels=2, zoom_points=9, record=None, terminal=None):
    """Value iteration from the terminal reward up to ``horizon``.

    ``record`` lists the times at which to keep the grid values (default:
    only ``horizon``). Times are rounded to whole substeps.
    """
    if scheme not in ("heun", "euler"):
        raise ConfigError(f"unknown scheme {scheme!r}")
    if not (state_step > 0 and time_step > 0 and control_step > 0):
        raise ConfigError("DP steps must be positive")
    domain = domain or problem.X
    terminal = terminal or problem.terminal
    axes = uniform_axes(domain, state_step)
    lower = np.array([a[0] for a in axes])
    step = np.array([a[1] - a[0] for a in axes])
    shape = tuple(len(a) for a in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    nsub = max(1, int(np.ceil(horizon / time_step - 1e-9)))
    tau = horizon / nsub
    record = [horizon] if record is None else list(record)
    keep = {int(round(t / tau)): t for t in record}

    controls = _control_lattice(problem.U, control_step)
    spacing = control_step
    offsets = []
    for _ in range(zoom_levels):
        offsets.append(_zoom_offsets(problem.m, zoom_points, spacing))
        spacing = 2.0 * spacing / (zoom_points - 1)

    times, values = [], []
    if 0 in keep:
        times.append(0.0)
        values.append(np.asarray(terminal(nodes), dtype=float).reshape(shape))
    prev = terminal
    rows = max(1, _CHUNK // max(controls.shape[0], offsets[0].shape[0] if offsets else 1))
    for k in range(1, nsub + 1):
        stage = _Stage(problem, domain, lower, step, tau, scheme, prev)
        out = np.empty(nodes.shape[0])
        for s in range(0, nodes.shape[0], rows):
            x = nodes[s:s + rows]
            v, u = _best_controls(stage, x, controls, problem.U)
            for off in offsets:
                v, u = _zoom(stage, x, u, v, off, problem.U)
            out[s:s + rows] = v
        prev = out.reshape(shape)
        if k in keep:
            times.append(k * tau)
            values.append(prev)
    return DPSolution(axes, times, values)


def one_step_dp(problem, w, delta, state_step, time_step, control_step, domain=None, **kw):
    """Dense-DP approximation of the exact semigroup applied to ``w`` over
    one step ``delta``."""
    return solve_dp(problem, delta, state_step, time_step, control_step, domain=domain,
                    terminal=w, **kw)
