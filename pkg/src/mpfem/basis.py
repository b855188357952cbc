"""Quadratic and Lipschitz finite elements on regular grids.

A quadratic element of Hessian 1/c centered at x̂ is ``-|x - x̂|_2^2 / (2c)``;
a Lipschitz element of constant A is ``-A |x - x̂|_1``. Families store their
centers as an ``(count, n)`` array so that whole Gram matrices are computed
by broadcasting.
"""
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._backend import kernels as _k
from .errors import ConfigError, DimensionError

QUADRATIC = "quadratic"
LIPSCHITZ = "lipschitz"
KINDS = (QUADRATIC, LIPSCHITZ)
_KIND_CODE = {QUADRATIC: 0, LIPSCHITZ: 1}

_GRID_TOL = 1e-9


@dataclass(frozen=True)
class Box:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("box bounds must be 1-D arrays of equal length")
        if not np.all(lo < hi):
            raise ConfigError(f"box needs lower < upper componentwise, got {lo} and {hi}")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, dim, half_width, center=0.0):
        return cls(np.full(dim, center - half_width), np.full(dim, center + half_width))

    @property
    def dim(self):
        return self.lower.shape[0]

    @property
    def center(self):
        return 0.5 * (self.lower + self.upper)

    def expand(self, margin):
        """Axis-aligned enlargement by ``margin`` (the ∞-norm ball sum)."""
        return Box(self.lower - margin, self.upper + margin)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return np.all((x >= self.lower - tol) & (x <= self.upper + tol), axis=-1)

    def project(self, x):
        return np.clip(x, self.lower, self.upper)

    def key(self):
        return (tuple(self.lower.tolist()), tuple(self.upper.tolist()))

    def __eq__(self, other):
        return isinstance(other, Box) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())


def axis_nodes(lower, upper, step):
    """Nodes lower, lower+step, ... with ``upper`` always included."""
    if step <= 0:
        raise ConfigError(f"grid step must be positive, got {step}")
    length = upper - lower
    k = int(np.floor(length / step + _GRID_TOL))
    nodes = lower + step * np.arange(k + 1)
    if abs(nodes[-1] - upper) <= _GRID_TOL * max(step, abs(upper)):
        nodes[-1] = upper
    else:
        nodes = np.append(nodes, upper)
    return nodes


@dataclass(frozen=True)
class RegularGrid:
    box: Box
    step: float

    def __post_init__(self):
        if not self.step > 0:
            raise ConfigError(f"grid step must be positive, got {self.step}")

    @property
    def axes(self):
        return [axis_nodes(lo, hi, self.step) for lo, hi in zip(self.box.lower, self.box.upper)]

    @property
    def shape(self):
        return tuple(len(a) for a in self.axes)

    @property
    def nodes(self):
        """All nodes, ``(count, n)``, lexicographic with the first axis slowest."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def __len__(self):
        return int(np.prod(self.shape))

    def refine(self, factor):
        return RegularGrid(self.box, self.step / factor)


@dataclass(frozen=True)
class BasisFunction:
    kind: str
    center: np.ndarray
    shape: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown element kind {self.kind!r}")
        if not self.shape > 0:
            raise ConfigError(f"element shape parameter must be positive, got {self.shape}")
        object.__setattr__(self, "center", np.atleast_1d(np.asarray(self.center, dtype=float)))

    def __call__(self, x):
        return evaluate(self, x)


def _values(kind, shape, diff):
    if kind == QUADRATIC:
        return -np.einsum("...k,...k->...", diff, diff) / (2.0 * shape)
    return -shape * np.abs(diff).sum(axis=-1)


def _gradients(kind, shape, diff):
    # sign(0) = 0 picks the zero element of the subdifferential at a kink.
    if kind == QUADRATIC:
        return -diff / shape
    return -shape * np.sign(diff)


def evaluate(w, x):
    """Value of one element at ``x`` (any leading batch shape)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != w.center.shape[0]:
        raise DimensionError(f"point of dim {x.shape[-1]} for element of dim {w.center.shape[0]}")
    out = _values(w.kind, w.shape, x - w.center)
    return float(out) if np.ndim(out) == 0 else out


def gradient(w, x):
    x = np.asarray(x, dtype=float)
    return _gradients(w.kind, w.shape, x - w.center)


@dataclass(frozen=True)
class BasisFamily:
    """Elements of one kind and shape centered at the nodes of ``grid``."""

    kind: str
    shape: float
    grid: RegularGrid

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown element kind {self.kind!r}")
        if not self.shape > 0:
            raise ConfigError(f"element shape parameter must be positive, got {self.shape}")
        object.__setattr__(self, "_centers", self.grid.nodes)

    @property
    def centers(self):
        return self._centers

    @property
    def dim(self):
        return self.grid.box.dim

    def __len__(self):
        return self._centers.shape[0]

    def __getitem__(self, i):
        return BasisFunction(self.kind, self._centers[i], self.shape)

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def kind_code(self):
        return _KIND_CODE[self.kind]

    def values(self, x, index=None):
        """Element values at points: ``(m, count)``, or ``(m,)`` when each
        point ``x[r]`` is paired with element ``index[r]``."""
        x = np.asarray(x, dtype=float)
        if index is None:
            return _values(self.kind, self.shape, x[:, None, :] - self._centers[None, :, :])
        return _values(self.kind, self.shape, x - self._centers[index])

    def gradients(self, x, index):
        return _gradients(self.kind, self.shape, np.asarray(x, dtype=float) - self._centers[index])

    def combine(self, coeffs, points):
        """max_i (w_i(x) + coeffs_i) at every row of ``points``."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (len(self),):
            raise DimensionError(f"need {len(self)} coefficients, got shape {coeffs.shape}")
        return _k.envelope(np.atleast_2d(points), self._centers, coeffs, self.kind_code, self.shape)


def build_families(X, dx, c, A, L, test_kind=LIPSCHITZ):
    """Primal quadratic family on X expanded by cL, test family on X.

    With ``test_kind="quadratic"`` the test functions are quadratic elements
    of the same Hessian instead of Lipschitz elements of constant A.
    """
    if not c > 0:
        raise ConfigError(f"c must be positive, got {c}")
    if L < 0:
        raise ConfigError(f"L must be nonnegative, got {L}")
    if test_kind == LIPSCHITZ and A < L:
        raise ConfigError(f"Lipschitz test constant A={A} must be at least L={L}")
    hat = X.expand(c * L) if c * L > 0 else X
    primal = BasisFamily(QUADRATIC, c, RegularGrid(hat, dx))
    if test_kind == LIPSCHITZ:
        test = BasisFamily(LIPSCHITZ, A, RegularGrid(X, dx))
    elif test_kind == QUADRATIC:
        test = BasisFamily(QUADRATIC, c, RegularGrid(X, dx))
    else:
        raise ConfigError(f"unknown test kind {test_kind!r}")
    return primal, test


class ScalarProduct(NamedTuple):
    value: float
    argmax: np.ndarray
    closed_form: bool


def _pair_argmax(kind_z, shape_z, a, kind_w, shape_w, b, lower, upper):
    """Per-coordinate maximizer of z + w over the box, closed-form pairs only.

    Arrays broadcast; returns None for unsupported pairs.
    """
    if kind_z == QUADRATIC and kind_w == QUADRATIC:
        x = (a / shape_z + b / shape_w) / (1.0 / shape_z + 1.0 / shape_w)
    elif {kind_z, kind_w} == {QUADRATIC, LIPSCHITZ}:
        if kind_z == LIPSCHITZ:
            kink, slope, peak, c = a, shape_z, b, shape_w
        else:
            kink, slope, peak, c = b, shape_w, a, shape_z
        gap = peak - kink
        reach = slope * c
        x = np.where(np.abs(gap) <= reach, kink, peak - np.sign(gap) * reach)
    else:
        return None
    # Concave and separable: the boxed maximizer clips the free one.
    return np.clip(x, lower, upper)


def scalar_product_detail(z, w, X):
    """sup over X of z + w, in closed form for quadratic/quadratic and
    Lipschitz/quadratic pairs, else by numeric concave maximization."""
    if z.center.shape != w.center.shape or z.center.shape[0] != X.dim:
        raise DimensionError("elements and box must share the state dimension")
    x = _pair_argmax(z.kind, z.shape, z.center, w.kind, w.shape, w.center, X.lower, X.upper)
    if x is not None:
        return ScalarProduct(float(evaluate(z, x) + evaluate(w, x)), x, True)
    from .optimizer import ObjectiveSpec, maximize_concave_box

    kinks = np.full(X.dim, np.nan)
    weights = np.zeros(X.dim)
    for f in (z, w):
        if f.kind == LIPSCHITZ:
            kinks, weights = f.center, weights + f.shape
    obj = ObjectiveSpec(
        dim=X.dim, box=X,
        value=lambda y: evaluate(z, y) + evaluate(w, y),
        gradient=lambda y: gradient(z, y) + gradient(w, y),
        kinks=kinks if np.isfinite(kinks).any() else None,
        kink_weights=weights if np.isfinite(kinks).any() else None,
    )
    res = maximize_concave_box(obj)
    return ScalarProduct(res.value, res.argmax, False)


def scalar_product(z, w, X):
    return scalar_product_detail(z, w, X).value


def gram_matrix(test, primal, X):
    """Matrix of scalar products <z_j, w_i> over X, shape ``(q, p)``.

    Raises ``ConfigError`` for kind pairs without a closed form; callers
    fall back to :func:`scalar_product` entry by entry.
    """
    a = test.centers[:, None, :]
    b = primal.centers[None, :, :]
    x = _pair_argmax(test.kind, test.shape, a, primal.kind, primal.shape, b, X.lower, X.upper)
    if x is None:
        raise ConfigError(f"no closed form for ({test.kind}, {primal.kind}) scalar products")
    return gram_argmax_values(test, primal, x)


def gram_argmax(test, primal, X, rows=None, cols=None):
    """Closed-form maximizers of z_j + w_i for index arrays ``rows``/``cols``."""
    a = test.centers if rows is None else test.centers[rows]
    b = primal.centers if cols is None else primal.centers[cols]
    return _pair_argmax(test.kind, test.shape, a, primal.kind, primal.shape, b, X.lower, X.upper)


def gram_argmax_values(test, primal, x):
    a = test.centers[:, None, :]
    b = primal.centers[None, :, :]
    return _values(test.kind, test.shape, x - a) + _values(primal.kind, primal.shape, x - b)
