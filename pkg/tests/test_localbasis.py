import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from local_lagrange import (
    KernelSpec,
    LocalUnisolventError,
    Manifold,
    NeighborIndex,
    NodeSet,
    TruncationSpec,
    assemble,
    build_local_basis,
    footprint_count,
    gen_fibonacci,
    gen_torus,
    lagrange_all,
    truncate_lagrange,
)
from local_lagrange.diagnostics import lat_lon_grid
from local_lagrange.kernels import kernel_matrix, side_basis
from local_lagrange.localbasis import read_basis, retained_set, truncation_error, write_basis

# Sup error of the 63-nearest truncation at N = 900, locked from the first run (0.1710).
BYCOUNT_900_BOUND = 0.18


@pytest.mark.parametrize(
    "N, M",
    [(642, 56), (2562, 84), (10242, 119), (23042, 140), (40962, 154), (92162, 175), (163842, 196), (900, 63)],
)
def test_footprint_count(N, M):
    assert footprint_count(N) == M


def test_footprint_count_edges():
    assert footprint_count(10) == 7
    assert footprint_count(12) == 12  # 14, capped at N
    assert footprint_count(30) == 21
    with pytest.raises(ValueError):
        footprint_count(9)


@given(st.integers(10, 10**7))
def test_footprint_count_formula(N):
    M = footprint_count(N)
    assert M == min(7 * math.ceil(math.log10(N) ** 2), N)
    assert M <= N


def local_residuals(spec, nodes, basis):
    """Per-column max deviation from cardinality and from the side conditions."""
    pts = nodes.points
    card = np.empty(basis.N)
    side = np.empty(basis.N)
    for xi in range(basis.N):
        mem = basis.members[xi]
        P = pts[mem]
        vals = kernel_matrix(spec, P, P) @ basis.coef[xi] + side_basis(spec, P) @ basis.B[:, xi]
        target = np.zeros(len(mem))
        target[0] = 1.0
        card[xi] = np.abs(vals - target).max()
        side[xi] = np.abs(side_basis(spec, P).T @ basis.coef[xi]).max()
    return card, side


def test_local_basis_structure(ico2562):
    nodes, basis = ico2562
    assert (basis.N, basis.M, basis.Q) == (2562, 84, 4)
    assert np.all(np.diff(basis.A.indptr) == 84)
    assert np.array_equal(basis.members[:, 0], np.arange(2562))
    fp = basis.footprints[100]
    assert fp.center == 100 and fp.members[0] == 100 and len(set(fp.members)) == 84
    index = NeighborIndex(nodes)
    assert np.array_equal(basis.members[100], index.knn(100, 84))


def test_local_cardinality_2562(tps2, ico2562):
    nodes, basis = ico2562
    card, side = local_residuals(tps2, nodes, basis)
    assert card.max() <= 1e-8
    assert side.max() <= 1e-8


def test_full_footprint_equals_lagrange_basis(tps2):
    nodes = gen_fibonacci(100)
    basis = build_local_basis(tps2, nodes, M=100)
    L = lagrange_all(assemble(tps2, nodes))
    np.testing.assert_allclose(basis.A.toarray(), L.A, atol=1e-8 * np.abs(L.A).max())
    np.testing.assert_allclose(basis.B, L.B, atol=1e-8)


def test_torus_local_basis():
    spec = KernelSpec.torus()
    nodes = gen_torus(300, seed=0)
    basis = build_local_basis(spec, nodes, M=40)
    card, side = local_residuals(spec, nodes, basis)
    assert card.max() <= 1e-8 and side.max() <= 1e-8


def test_m3_local_basis():
    spec = KernelSpec.sphere(3)
    nodes = gen_fibonacci(200)
    basis = build_local_basis(spec, nodes, M=40)
    card, side = local_residuals(spec, nodes, basis)
    assert basis.Q == 9 and card.max() <= 1e-8 and side.max() <= 1e-8


def test_footprint_too_small(tps2):
    nodes = gen_fibonacci(50)
    with pytest.raises(ValueError):
        build_local_basis(tps2, nodes, M=4)
    with pytest.raises(ValueError):
        build_local_basis(tps2, nodes, M=51)


def test_local_non_unisolvence_names_center(tps2):
    ang = np.linspace(0, 2 * np.pi, 30, endpoint=False)
    ring = np.column_stack([np.cos(ang), np.sin(ang), np.zeros(30)])
    nodes = NodeSet(Manifold.SPHERE2, np.vstack([ring, [[0, 0, 1.0], [0, 0, -1.0]]]))
    with pytest.raises(LocalUnisolventError) as err:
        build_local_basis(tps2, nodes, M=5)
    assert err.value.center == 0


def test_chunking_and_threads_bit_identical(tps2):
    nodes = gen_fibonacci(500)
    ref = build_local_basis(tps2, nodes)
    for kw in ({"chunk": 7}, {"chunk": 500}, {"workers": 3, "chunk": 64}):
        other = build_local_basis(tps2, nodes, **kw)
        assert np.array_equal(other.coef, ref.coef)
        assert np.array_equal(other.B, ref.B)
        assert np.array_equal(other.members, ref.members)


def test_basis_file_roundtrip(tmp_path, tps2, ico642):
    _, basis = ico642
    path = tmp_path / "basis.txt"
    write_basis(path, basis)
    head = path.read_text().splitlines()[0]
    assert head == "# 642 56 4"
    back = read_basis(path, tps2)
    assert np.array_equal(back.members, basis.members)
    assert np.array_equal(back.coef, basis.coef)
    assert np.array_equal(back.B, basis.B)
    with pytest.raises(ValueError):
        read_basis(path, KernelSpec.sphere(3))


# -- truncation of the full Lagrange function -------------------------------


@pytest.fixture(scope="module")
def trunc900(fib900):
    nodes, stats, L = fib900
    xi = nodes.nearest_node([0.0, 0.0, 1.0])
    _, grid = lat_lon_grid(200, 400)
    return nodes, stats, L, xi, grid.reshape(-1, 3), NeighborIndex(nodes)


def test_truncation_trivial_cases(trunc900):
    nodes, stats, L, xi, _, index = trunc900
    whole = truncate_lagrange(L, nodes, xi, TruncationSpec.by_radius(100.0), stats.h, index)
    np.testing.assert_array_equal(whole.toarray().ravel(), L.A[:, xi])
    one = truncate_lagrange(L, nodes, xi, TruncationSpec.by_count(1), stats.h, index)
    assert one.nnz == 1 and one[xi, 0] == L.A[xi, xi]


def test_truncation_spec_validation():
    with pytest.raises(ValueError):
        TruncationSpec("box", 1.0)
    with pytest.raises(ValueError):
        TruncationSpec.by_radius(0.0)
    assert TruncationSpec.by_radius(2.0).radius(0.1) == pytest.approx(2 * 0.1 * math.log(10))


def test_radius_retained_count_900(trunc900):
    nodes, stats, L, xi, _, index = trunc900
    kept = retained_set(nodes, xi, TruncationSpec.by_radius(4.0), stats.h, index)
    assert xi in kept
    assert len(kept) <= 350


def test_retained_count_follows_cap_area(trunc900):
    nodes, stats, L, xi, _, index = trunc900
    for K in (1.0, 2.0, 4.0):
        r = TruncationSpec.by_radius(K).radius(stats.h)
        model = nodes.N * (1 - math.cos(r)) / 2  # ~ N (K h log h)^2 / 4 for small r
        count = len(retained_set(nodes, xi, TruncationSpec.by_radius(K), stats.h, index))
        assert model / 2 <= count <= 2 * model


def test_truncation_error_zero_when_nothing_cut(tps2, trunc900):
    nodes, _, L, xi, grid, _ = trunc900
    assert truncation_error(tps2, nodes, L.A[:, xi], L.A[:, xi], grid) == 0.0


def test_truncation_error_decreases_in_K(tps2, trunc900):
    nodes, stats, L, xi, grid, index = trunc900
    errs = []
    for K in (1.0, 2.0, 4.0):
        col = truncate_lagrange(L, nodes, xi, TruncationSpec.by_radius(K), stats.h, index)
        errs.append(truncation_error(tps2, nodes, L.A[:, xi], col, grid))
    assert errs[0] > errs[1] > errs[2] > 0


def test_bycount_truncation_900(tps2, trunc900):
    nodes, stats, L, xi, grid, index = trunc900
    M = footprint_count(nodes.N)
    col = truncate_lagrange(L, nodes, xi, TruncationSpec.by_count(M), stats.h, index)
    assert col.nnz == 63
    err = truncation_error(tps2, nodes, L.A[:, xi], col, grid)
    assert err <= BYCOUNT_900_BOUND


@pytest.mark.xfail(strict=True, reason="pure truncation to 63 centers leaves 0.17; 1e-3 needs K = 4 (153 centers)")
def test_bycount_truncation_900_below_1e3(tps2, trunc900):
    nodes, stats, L, xi, grid, index = trunc900
    col = truncate_lagrange(L, nodes, xi, TruncationSpec.by_count(63), stats.h, index)
    chi_max = 1.0  # Lagrange function peaks at its own node
    assert truncation_error(tps2, nodes, L.A[:, xi], col, grid) <= 1e-3 * chi_max
