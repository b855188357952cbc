import dataclasses

import numpy as np
import pytest

from mpfem.assembly import (AssembledSystem, approximate_semigroup, assemble, assemble_mass,
                            assemble_stiffness_direct, assemble_stiffness_hamiltonian,
                            cache_key, load_system, prune_mask, save_system)
from mpfem.basis import LIPSCHITZ, QUADRATIC, BasisFunction, Box, build_families
from mpfem.errors import AssemblyError, ConfigError, DimensionError
from mpfem.optimizer import OptimizerConfig
from mpfem.problem import Branch, degenerate_problem, distance_problem, lq_problem

CFG = OptimizerConfig(multistart=1)


def small(dim=1, dx=0.5, c=0.5, A=3.0, L=0.0, kind=LIPSCHITZ):
    X = Box.cube(dim, 1.0)
    return X, build_families(X, dx, c, A, L, test_kind=kind)


def test_zero_dynamics_give_mass_matrix():
    X, (primal, test) = small(dim=2)
    p = degenerate_problem(X, primal[0])
    B, meta = assemble_stiffness_direct(p, test, primal, 0.25, CFG)
    A = assemble_mass(test, primal, X)
    assert np.allclose(B, A, atol=1e-10)
    assert meta["entries"] == A.size and meta["pruned"] == 0


def test_tiny_step_approaches_mass_matrix():
    X, (primal, test) = small(kind=QUADRATIC)
    B, _ = assemble_stiffness_direct(lq_problem(dim=1), test, primal, 1e-9, CFG)
    A = assemble_mass(test, primal, X)
    assert np.abs(B - A).max() < 1e-7
    assert np.all(B <= A + 1e-12)


def _entry_1d(a, b, c, d, X=1.0, U=3.0):
    """Maximizer of the joint quadratic from its 2x2 stationarity system."""
    H = np.array([[-2 / c - d, -d / c], [-d / c, -d * d / c - d]])
    x, u = np.linalg.solve(H, -np.array([(a + b) / c, d * b / c]))
    assert abs(x) < X and abs(u) < U
    return -(x - a) ** 2 / (2 * c) - (x + d * u - b) ** 2 / (2 * c) - d * x * x / 2 - d * u * u / 2


def test_lq_entries_match_closed_form():
    X, (primal, test) = small(kind=QUADRATIC)
    d = 0.25
    B, meta = assemble_stiffness_direct(lq_problem(dim=1), test, primal, d, CFG)
    for j in range(len(test)):
        for i in range(len(primal)):
            want = _entry_1d(test.centers[j, 0], primal.centers[i, 0], 0.5, d)
            assert B[j, i] == pytest.approx(want, abs=1e-12)
    assert meta["converged"].all()


def test_lq_two_dimensional_entries_are_sums():
    X1, (p1, t1) = small(dim=1)
    X2, (p2, t2) = small(dim=2)
    B1, _ = assemble_stiffness_direct(lq_problem(dim=1), t1, p1, 0.25, CFG)
    B2, _ = assemble_stiffness_direct(lq_problem(dim=2), t2, p2, 0.25, CFG)
    k = len(p1)
    for j in range(len(t2)):
        for i in range(len(p2)):
            want = B1[j // k, i // k] + B1[j % k, i % k]
            assert B2[j, i] == pytest.approx(want, abs=1e-9)


def test_certification_flag():
    from mpfem.problem import lq_smoothness
    X, (primal, test) = small(kind=QUADRATIC)
    s = lq_smoothness(0.5, dim=1)
    _, meta = assemble_stiffness_direct(lq_problem(dim=1), test, primal, 0.01, CFG, s)
    assert meta["certified"]
    _, meta = assemble_stiffness_direct(lq_problem(dim=1), test, primal, 0.5, CFG, s)
    assert not meta["certified"]


def test_pruning_only_removes_entries():
    X, (primal, test) = small(dim=2)
    p = lq_problem(dim=2)
    full, _ = assemble_stiffness_direct(p, test, primal, 0.25, CFG)
    A = assemble_mass(test, primal, X)
    pruned, meta = assemble_stiffness_direct(p, test, primal, 0.25, CFG, prune=1.0, mass=A)
    keep = prune_mask(A, 1.0)
    assert meta["pruned"] == int((~keep).sum()) > 0
    assert np.all(np.isneginf(pruned[~keep]))
    assert np.allclose(pruned[keep], full[keep], atol=1e-12)
    assert prune_mask(A, None).all()


def test_assembly_is_deterministic():
    X, (primal, test) = small(dim=2)
    p = distance_problem()
    a, _ = assemble_stiffness_direct(p, test, primal, 0.25, CFG)
    b, _ = assemble_stiffness_direct(p, test, primal, 0.25, CFG, chunk=7, threads=2)
    assert np.array_equal(a, b)


def test_hamiltonian_variant():
    X, (primal, test) = small(kind=QUADRATIC)
    A = assemble_mass(test, primal, X)
    zero = lambda x, p: np.zeros(np.shape(x)[:-1])
    B, _ = assemble_stiffness_hamiltonian(lq_problem(dim=1), zero, test, primal, 0.1, CFG)
    assert np.allclose(B, A, atol=1e-9)
    lip = dataclasses.replace(primal, kind=LIPSCHITZ, shape=3.0)
    with pytest.raises(ConfigError):
        assemble_stiffness_hamiltonian(lq_problem(dim=1), zero, test, lip, 0.1, CFG)


def test_failed_entry_raises_assembly_error():
    X, (primal, test) = small()
    bad = lambda x, u: np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(u)[:-1]), np.nan)
    p = lq_problem(dim=1)
    p = dataclasses.replace(p, interior=Branch(p.interior.dynamics, bad))
    with pytest.raises(AssemblyError) as err:
        assemble_stiffness_direct(p, test, primal, 0.25, CFG)
    assert err.value.entry == (0, 0)


def test_semigroup_two_dimensions_is_sum_of_one(rng):
    w2 = BasisFunction(QUADRATIC, [0.3, -0.5], 0.5)
    pts = rng.uniform(-1, 1, size=(30, 2))
    v2 = approximate_semigroup(lq_problem(dim=2), w2, 0.2, pts, CFG)
    v1 = [approximate_semigroup(lq_problem(dim=1), BasisFunction(QUADRATIC, [w2.center[k]], 0.5),
                                0.2, pts[:, [k]], CFG) for k in range(2)]
    assert np.allclose(v2, v1[0] + v1[1], atol=1e-12)


def test_semigroup_on_absorbing_boundary():
    w = BasisFunction(QUADRATIC, [0.0, 0.0], 1.0)
    pts = np.array([[1.0, 0.2], [0.0, 0.0]])
    v = approximate_semigroup(distance_problem(), w, 0.25, pts, CFG)
    assert v[0] == pytest.approx(w(pts[0]), abs=1e-15)
    assert v[1] == pytest.approx(-0.25, abs=1e-12)


def test_cache_round_trip(tmp_path):
    X, (primal, test) = small(dim=2)
    p = distance_problem()
    sys = assemble(p, test, primal, 0.25, CFG, cache_dir=str(tmp_path))
    key = cache_key(p, test, primal, 0.25, CFG, None)
    again = assemble(p, test, primal, 0.25, CFG, cache_dir=str(tmp_path))
    assert again.metadata == {"cached": True}
    assert np.array_equal(again.A, sys.A) and np.array_equal(again.B, sys.B)
    assert (tmp_path / key / "B.csv").exists()
    save_system(str(tmp_path / "copy"), again)
    assert (tmp_path / "copy" / "B.csv").read_bytes() == (tmp_path / key / "B.csv").read_bytes()
    assert load_system(str(tmp_path / "copy")).delta == 0.25
    assert cache_key(p, test, primal, 0.125, CFG, None) != key


def test_system_validation():
    with pytest.raises(DimensionError):
        AssembledSystem(np.zeros((2, 2)), np.zeros((2, 3)), 0.1)
    with pytest.raises(ConfigError):
        AssembledSystem(np.zeros((2, 2)), np.zeros((2, 2)), 0.0)
    X, (primal, test) = small()
    with pytest.raises(ConfigError):
        assemble(lq_problem(dim=1), test, primal, 0.1, CFG, variant="other")


def test_mass_matrix_examples():
    X = Box.cube(2, 1.0)
    primal, test = build_families(X, 0.5, 1.0, 3.0, 0.0, test_kind=QUADRATIC)
    A = assemble_mass(test, primal, X)
    assert np.all(np.diag(A) == 0.0)
    d2 = np.sum((test.centers[0] - primal.centers[12]) ** 2)
    assert A[0, 12] == pytest.approx(-d2 / 4, abs=1e-15)
    _, lip = build_families(X, 0.5, 1.0, 3.0, 0.0)
    assert np.all(np.diag(assemble_mass(lip, primal, X)) == 0.0)


def test_lq_entries_within_sanity_envelope():
    # u = 0 is feasible and ell(x, 0) >= -|x|^2/2 >= -1 on X; ell <= 0 everywhere.
    X, (primal, test) = small(dim=2)
    d = 0.25
    B, _ = assemble_stiffness_direct(lq_problem(dim=2), test, primal, d, CFG)
    A = assemble_mass(test, primal, X)
    assert np.all(B >= A - d - 1e-12)
    assert np.all(B <= 0.0)


def _hamiltonian_entry_1d(a, b, c, d):
    # z + w + d(-x^2/2 + w'(x)^2/2) with quadratic z, w: a concave quadratic in x.
    k = -2 / c - d + d / c ** 2
    x = -((a + b) / c - d * b / c ** 2) / k
    assert abs(x) < 1.0
    return -(x - a) ** 2 / (2 * c) - (x - b) ** 2 / (2 * c) + d * (-x * x / 2 + (x - b) ** 2 / (2 * c * c))


def test_hamiltonian_lq_closed_form():
    X, (primal, test) = small(kind=QUADRATIC)
    p = lq_problem(dim=1)
    B, _ = assemble_stiffness_hamiltonian(p, p.hamiltonian, test, primal, 0.1, CFG)
    for j in range(len(test)):
        for i in range(len(primal)):
            want = _hamiltonian_entry_1d(test.centers[j, 0], primal.centers[i, 0], 0.5, 0.1)
            assert B[j, i] == pytest.approx(want, abs=1e-9)


def test_hamiltonian_agrees_with_direct_to_second_order():
    X, (primal, test) = small(dim=2, kind=QUADRATIC)
    p = lq_problem()
    deltas = (0.1, 0.05, 0.025)
    gaps = []
    for d in deltas:
        Bd, _ = assemble_stiffness_direct(p, test, primal, d, CFG)
        Bh, _ = assemble_stiffness_hamiltonian(p, p.hamiltonian, test, primal, d, CFG)
        gaps.append(np.abs(Bd - Bh).max())
    slope = np.polyfit(np.log(deltas), np.log(gaps), 1)[0]
    assert abs(slope - 2.0) <= 0.3
