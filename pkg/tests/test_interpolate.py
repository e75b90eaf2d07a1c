import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from local_lagrange import (
    KernelSpec,
    Manifold,
    NodeSet,
    NonUnisolventError,
    ResourceCapError,
    assemble,
    evaluate,
    gen_fibonacci,
    gen_torus,
    lagrange_all,
    solve_saddle,
)
from local_lagrange.geometry import fibonacci_points
from local_lagrange.interpolate import InterpolantCoeffs, write_lagrange_csv
from local_lagrange.kernels import side_basis

TETRA = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / math.sqrt(3)


def constrained(Phi, rng, n=None):
    Qm, _ = np.linalg.qr(Phi)
    a = rng.standard_normal((Phi.shape[0], n) if n else Phi.shape[0])
    return a - Qm @ (Qm.T @ a)


# -- assembly --------------------------------------------------------------


def test_tetrahedral_assembly(tps2):
    system = assemble(tps2, NodeSet(Manifold.SPHERE2, TETRA))
    assert system.Phi.shape == (4, 4)
    assert np.all(np.diag(system.K) == 0)


def test_great_circle_nodes_not_unisolvent(tps2):
    ang = np.array([0.3, 1.4, 2.0, 4.0])
    pts = np.column_stack([np.cos(ang), np.zeros(4), np.sin(ang)])
    with pytest.raises(NonUnisolventError) as err:
        assemble(tps2, NodeSet(Manifold.SPHERE2, pts))
    assert err.value.rank == 3


def test_too_few_nodes(tps2):
    pts = TETRA[:3]
    with pytest.raises(NonUnisolventError):
        assemble(tps2, NodeSet(Manifold.SPHERE2, pts))


def test_kernel_manifold_mismatch():
    with pytest.raises(ValueError):
        assemble(KernelSpec.torus(), gen_fibonacci(20))


def test_condition_estimate_finite(fib400):
    _, system, _ = fib400
    assert 1 < system.condition_estimate() < 1e12


# -- solving ---------------------------------------------------------------


@pytest.mark.parametrize("j", [0, 3])
def test_side_function_reproduced_exactly(tps2, fib400, j):
    nodes, system, _ = fib400
    y = side_basis(tps2, nodes.points)[:, j]
    c = solve_saddle(system, y)
    assert np.abs(c.a).max() < 1e-10
    np.testing.assert_allclose(c.b, np.eye(4)[j], atol=1e-10)


def test_solution_satisfies_side_conditions(fib400, rng):
    nodes, system, _ = fib400
    c = solve_saddle(system, rng.uniform(-1, 1, nodes.N))
    assert np.abs(system.Phi.T @ c.a).max() <= 1e-8 * (1 + np.abs(c.a).max())


def test_wrong_data_length(fib400):
    _, system, _ = fib400
    with pytest.raises(ValueError):
        solve_saddle(system, np.ones(3))


def test_unit_vector_solve_matches_lagrange_column(ico12):
    nodes, system, L = ico12
    for eta in range(12):
        c = solve_saddle(system, np.eye(12)[eta])
        np.testing.assert_allclose(c.a, L.A[:, eta], atol=1e-12)
        np.testing.assert_allclose(c.b, L.B[:, eta], atol=1e-12)


def test_dense_cap():
    system = assemble(KernelSpec.sphere(2), gen_fibonacci(50))
    with pytest.raises(ResourceCapError):
        lagrange_all(system, dense_cap=49)


# -- Lagrange matrix -------------------------------------------------------


@pytest.mark.parametrize("which", ["ico12", "fib400"])
def test_cardinality(which, request, tps2):
    nodes, _, L = request.getfixturevalue(which)
    for eta in range(0, nodes.N, max(1, nodes.N // 40)):
        vals = evaluate(tps2, nodes, L.column(eta), nodes.points)
        np.testing.assert_allclose(vals, np.eye(nodes.N)[eta], atol=1e-9)


def test_lagrange_matrix_symmetric(fib400):
    _, _, L = fib400
    assert np.abs(L.A - L.A.T).max() / np.abs(L.A).max() <= 1e-8


def test_lagrange_columns_satisfy_side_conditions(fib400):
    _, system, L = fib400
    assert np.abs(system.Phi.T @ L.A).max() <= 1e-8 * (1 + np.abs(L.A).max())


def test_lagrange_matrix_gram_psd(fib400, rng):
    _, system, L = fib400
    a = constrained(system.Phi, rng, 50)
    quad = np.einsum("in,ij,jn->n", a, L.A, a)
    assert np.all(quad >= -1e-8 * np.sum(a * a, axis=0) * np.abs(L.A).max())


def far_ratio(nodes, L):
    cos = nodes.points @ nodes.points.T
    return np.abs(L.A[cos < 0]).max() / np.abs(L.A).max()


@pytest.mark.xfail(strict=True, reason="measured 1.42e-6: pi/2 is only 12.2 h at N=400")
def test_far_coefficients_below_1e6_at_400(fib400):
    nodes, _, L = fib400
    assert far_ratio(nodes, L) < 1e-6


def test_far_coefficients_small(fib400, fib900):
    nodes, _, L = fib400
    assert far_ratio(nodes, L) < 2e-6
    nodes, _, L = fib900
    assert far_ratio(nodes, L) < 1e-8


def test_permutation_equivariance(tps2, rng):
    nodes = gen_fibonacci(120)
    perm = rng.permutation(120)
    L = lagrange_all(assemble(tps2, nodes))
    Lp = lagrange_all(assemble(tps2, NodeSet(Manifold.SPHERE2, nodes.points[perm])))
    assert np.abs(Lp.A - L.A[np.ix_(perm, perm)]).max() <= 1e-12 * np.abs(L.A).max()
    assert np.abs(Lp.B - L.B[:, perm]).max() <= 1e-12


def test_torus_lagrange_cardinal():
    spec = KernelSpec.torus()
    nodes = gen_torus(200, seed=0)
    L = lagrange_all(assemble(spec, nodes))
    vals = evaluate(spec, nodes, L.column(0), nodes.points)
    np.testing.assert_allclose(vals, np.eye(200)[0], atol=1e-9)


# -- evaluation ------------------------------------------------------------


def test_constant_reproduced_everywhere(tps2, fib400):
    nodes, system, _ = fib400
    c = solve_saddle(system, np.ones(nodes.N))
    x = fibonacci_points(1000)
    np.testing.assert_allclose(evaluate(tps2, nodes, c, x), 1.0, atol=1e-12)
    assert isinstance(evaluate(tps2, nodes, c, x[0]), float)


@settings(max_examples=15, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4), st.integers(0, 10_000))
def test_side_space_reproduction(coef, seed):
    spec = KernelSpec.sphere(2)
    nodes = gen_fibonacci(60)
    system = assemble(spec, nodes)
    coef = np.array(coef)
    c = solve_saddle(system, side_basis(spec, nodes.points) @ coef)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((100, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    np.testing.assert_allclose(evaluate(spec, nodes, c, x), side_basis(spec, x) @ coef, atol=1e-10)


def test_m3_quadratic_reproduction():
    spec = KernelSpec.sphere(3)
    nodes = gen_fibonacci(80)
    system = assemble(spec, nodes)
    coef = np.arange(1.0, 10.0) / 9
    c = solve_saddle(system, side_basis(spec, nodes.points) @ coef)
    x = fibonacci_points(100)
    np.testing.assert_allclose(evaluate(spec, nodes, c, x), side_basis(spec, x) @ coef, atol=1e-10)


def test_zero_function(tps2, fib400):
    nodes, _, _ = fib400
    zero = InterpolantCoeffs(np.zeros(nodes.N), np.zeros(4))
    assert np.all(evaluate(tps2, nodes, zero, fibonacci_points(50)) == 0)


def test_lagrange_csv(tmp_path, ico12):
    _, _, L = ico12
    path = tmp_path / "L.csv"
    assert write_lagrange_csv(path, L) == 144
    lines = path.read_text().splitlines()
    assert lines[0] == "eta_index,xi_index,coefficient"
    eta, xi, val = lines[1 + 13].split(",")
    assert float(val) == L.A[int(xi), int(eta)]
    assert write_lagrange_csv(path, L, threshold=np.abs(L.A).max() / 2) < 144
