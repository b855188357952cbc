import numpy as np
import pytest

from mpfem.basis import QUADRATIC, BasisFunction, Box
from mpfem.dp import one_step_dp, solve_dp, uniform_axes
from mpfem.errors import ConfigError
from mpfem.problem import (degenerate_problem, distance_oracle, distance_problem, lq_oracle,
                           lq_problem)


def test_uniform_axes_cover_box():
    axes = uniform_axes(Box([0.0, -1.0], [1.0, 1.0]), 0.3)
    assert len(axes[0]) == 5 and axes[0][-1] == 1.0
    assert np.allclose(np.diff(axes[1]), 2 / 7)


def test_lq_1d_first_order_in_resolution():
    p = lq_problem(dim=1, T=1.0)
    x = np.linspace(-0.5, 0.5, 11)[:, None]
    errs = []
    for h, tau in ((0.05, 0.1), (0.025, 0.05)):
        s = solve_dp(p, 1.0, h, tau, 0.25, zoom_levels=3, record=[0.5, 1.0])
        assert s.times == [0.5, 1.0]
        errs.append(np.abs(s.evaluate(x, 1.0) - lq_oracle()(x, 1.0)).max())
    assert errs[0] < 2e-3
    assert errs[1] < 0.6 * errs[0]


def test_distance_1d_is_exact():
    s = solve_dp(distance_problem(dim=1), 1.0, 0.05, 0.05, 0.25, scheme="euler")
    x = np.linspace(-1, 1, 41)[:, None]
    assert np.abs(s.evaluate(x, 1.0) - distance_oracle()(x, 1.0)).max() < 1e-12


def test_zero_dynamics_keep_terminal():
    X = Box.cube(1, 1.0)
    w = BasisFunction(QUADRATIC, [0.25], 0.5)
    s = one_step_dp(degenerate_problem(X, w), w, 0.5, 0.125, 0.25, 0.5, scheme="euler")
    assert np.allclose(s.evaluate(s.nodes, 0.5), w(s.nodes), atol=1e-15)


def test_record_and_errors():
    s = solve_dp(lq_problem(dim=1), 0.2, 0.25, 0.1, 0.5, record=[0.0, 0.2])
    assert np.array_equal(s.at(0.0), np.zeros(9))
    with pytest.raises(KeyError):
        s.at(0.1)
    with pytest.raises(ConfigError):
        solve_dp(lq_problem(dim=1), 0.2, 0.25, 0.1, 0.5, scheme="rk4")
    with pytest.raises(ConfigError):
        solve_dp(lq_problem(dim=1), 0.2, 0.0, 0.1, 0.5)
