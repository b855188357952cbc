import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpfem.basis import (LIPSCHITZ, QUADRATIC, BasisFunction, Box, RegularGrid, axis_nodes,
                         build_families, evaluate, gram_matrix, scalar_product,
                         scalar_product_detail)
from mpfem.errors import ConfigError, DimensionError


def test_evaluate_examples():
    assert evaluate(BasisFunction(QUADRATIC, [0, 0], 1.0), [1, 1]) == -1.0
    assert evaluate(BasisFunction(LIPSCHITZ, [0, 0], 3.0), [0.5, -0.5]) == -3.0
    for kind in (QUADRATIC, LIPSCHITZ):
        w = BasisFunction(kind, [0.3, -0.7], 2.0)
        assert evaluate(w, [0.3, -0.7]) == 0.0


def test_evaluate_dimension_mismatch():
    with pytest.raises(DimensionError):
        evaluate(BasisFunction(QUADRATIC, [0, 0], 1.0), [1, 2, 3])


def test_invalid_elements():
    with pytest.raises(ConfigError):
        BasisFunction("cubic", [0], 1.0)
    with pytest.raises(ConfigError):
        BasisFunction(QUADRATIC, [0], 0.0)
    with pytest.raises(ConfigError):
        Box([0, 1], [1, 1])


def test_axis_nodes_include_corner():
    assert np.allclose(axis_nodes(0.0, 1.0, 0.3), [0, 0.3, 0.6, 0.9, 1.0])
    assert np.allclose(axis_nodes(-1.0, 1.0, 0.5), [-1, -0.5, 0, 0.5, 1])
    assert np.allclose(axis_nodes(-1.0, 1.0, 0.1)[-1], 1.0)
    assert len(axis_nodes(-1.0, 1.0, 0.1)) == 21


def test_families_counts():
    X = Box.cube(2, 1.0)
    primal, test = build_families(X, 1.0, 1.0, 1.0, 0.0)
    assert len(primal) == len(test) == 9
    assert np.array_equal(primal.centers, test.centers)
    primal, _ = build_families(Box([0.0], [1.0]), 0.5, 1.0, 1.0, 0.5)
    assert np.allclose(primal.centers[:, 0], [-0.5, 0, 0.5, 1, 1.5])
    _, test = build_families(X, 0.05, 0.1, 1.0, 0.0, test_kind=QUADRATIC)
    assert test.grid.shape == (41, 41)
    assert test.kind == QUADRATIC


def test_families_reject_small_A():
    with pytest.raises(ConfigError):
        build_families(Box.cube(2, 1.0), 0.5, 1.0, 0.5, 1.0)


def test_grid_order_first_axis_slowest():
    g = RegularGrid(Box([0, 0], [1, 2]), 1.0)
    assert g.shape == (2, 3)
    assert np.array_equal(g.nodes[:4], [[0, 0], [0, 1], [0, 2], [1, 0]])


def _dense_sup(z, w, X, step=1e-3):
    """Separable grid search: sum of per-coordinate 1-D maxima."""
    total = 0.0
    for k in range(X.dim):
        xs = np.arange(X.lower[k], X.upper[k] + step / 2, step)
        fz = (-(xs - z.center[k]) ** 2 / (2 * z.shape) if z.kind == QUADRATIC
              else -z.shape * np.abs(xs - z.center[k]))
        fw = (-(xs - w.center[k]) ** 2 / (2 * w.shape) if w.kind == QUADRATIC
              else -w.shape * np.abs(xs - w.center[k]))
        total += np.max(fz + fw)
    return total


def test_quadratic_pair_midpoint():
    X = Box.cube(2, 1.0)
    a, b = np.array([-0.4, 0.2]), np.array([0.6, -0.2])
    z, w = BasisFunction(QUADRATIC, a, 1.0), BasisFunction(QUADRATIC, b, 1.0)
    d2 = np.sum((a - b) ** 2)
    res = scalar_product_detail(z, w, X)
    assert res.closed_form
    assert res.value == pytest.approx(-d2 / 4, abs=1e-15)
    assert np.allclose(res.argmax, (a + b) / 2)
    assert res.value == pytest.approx(_dense_sup(z, w, X), abs=1e-6)


@pytest.mark.parametrize("a,b", [(0.0, 0.5), (0.0, 2.5), (0.3, -3.0)])
def test_lipschitz_quadratic_branches(a, b):
    A, c = 3.0, 1.0
    X = Box([-10.0], [10.0])
    z, w = BasisFunction(LIPSCHITZ, [a], A), BasisFunction(QUADRATIC, [b], c)
    gap = abs(b - a)
    want = -(a - b) ** 2 / (2 * c) if gap <= A * c else -A * gap + A * A * c / 2
    assert scalar_product(z, w, X) == pytest.approx(want, abs=1e-12)
    assert scalar_product(z, w, X) == pytest.approx(_dense_sup(z, w, X), abs=1e-5)


def test_shared_center_zero():
    X = Box.cube(2, 1.0)
    for kind in (QUADRATIC, LIPSCHITZ):
        z = BasisFunction(kind, [0.2, 0.1], 3.0)
        w = BasisFunction(QUADRATIC, [0.2, 0.1], 1.0)
        assert scalar_product(z, w, X) == 0.0


def test_clipped_maximizer_matches_grid():
    X = Box.cube(2, 1.0)
    z = BasisFunction(LIPSCHITZ, [1.0, -1.0], 3.0)
    w = BasisFunction(QUADRATIC, [2.5, -2.0], 0.2)
    assert scalar_product(z, w, X) == pytest.approx(_dense_sup(z, w, X), abs=1e-6)


def test_lipschitz_pair_uses_optimizer():
    X = Box.cube(1, 1.0)
    z, w = BasisFunction(LIPSCHITZ, [0.2], 3.0), BasisFunction(LIPSCHITZ, [-0.3], 1.0)
    res = scalar_product_detail(z, w, X)
    assert not res.closed_form
    assert res.value == pytest.approx(-0.5, abs=1e-7)


coord = st.floats(-1.5, 1.5, allow_nan=False)


@settings(max_examples=200)
@given(coord, coord, coord, coord, st.sampled_from([QUADRATIC, LIPSCHITZ]),
       st.floats(0.2, 3.0), st.floats(0.05, 2.0))
def test_sup_bounds_samples_and_symmetric(a0, a1, b0, b1, kind, shape, c):
    X = Box.cube(2, 1.0)
    z = BasisFunction(kind, [a0, a1], shape)
    w = BasisFunction(QUADRATIC, [b0, b1], c)
    val = scalar_product(z, w, X)
    xs = np.random.default_rng(0).uniform(-1, 1, size=(200, 2))
    assert np.all(evaluate(z, xs) + evaluate(w, xs) <= val + 1e-12)
    assert scalar_product(w, z, X) == pytest.approx(val, abs=1e-12)


def test_gram_matrix_matches_pairs():
    X = Box.cube(2, 1.0)
    primal, test = build_families(X, 0.5, 0.5, 3.0, 1.0)
    G = gram_matrix(test, primal, X)
    for j in (0, 7, 24):
        for i in (0, 13, 48):
            assert G[j, i] == pytest.approx(scalar_product(test[j], primal[i], X), abs=1e-14)


def test_quadratic_span_is_semiconvex(rng):
    X = Box.cube(2, 1.0)
    primal, _ = build_families(X, 0.25, 0.5, 3.0, 0.0)
    for _ in range(20):
        lam = rng.normal(size=len(primal))
        g = lambda x: primal.combine(lam, x) + np.sum(x * x, axis=-1) / (2 * primal.shape)
        a, b = rng.uniform(-1, 1, size=(2, 50, 2))
        mid = g((a + b) / 2)
        assert np.all(mid <= (g(a) + g(b)) / 2 + 1e-12)
