"""Local Lagrange bases.

Two routes to a sparse basis:

* ``build_local_basis`` solves a small saddle system on each footprint (the
  center plus its ``M - 1`` nearest neighbors). This is the practical route and
  scales to large ``N``.
* ``truncate_lagrange`` cuts a full Lagrange column down to a ball or a fixed
  number of nearest centers, without re-solving.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import LocalUnisolventError
from .geometry import NeighborIndex, NodeSet
from .interpolate import UNISOLVENCE_RTOL, LagrangeCoeffMatrix
from .kernels import KernelSpec, kernel_matrix, side_basis


def footprint_count(N: int) -> int:
    """Footprint size ``M = 7 * ceil((log10 N)^2)``, capped at ``N``."""
    if N < 10:
        raise ValueError("footprint_count needs N >= 10")
    return min(7 * math.ceil(math.log10(N) ** 2), N)


@dataclass(frozen=True)
class LocalFootprint:
    center: int
    members: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class SparseLocalBasis:
    """Local Lagrange basis on ``M``-point footprints.

    ``members[xi]`` lists the footprint of ``xi`` (``xi`` first) and
    ``coef[xi]`` the matching kernel coefficients; ``A`` is the same data as
    an ``N x N`` CSC matrix with ``M`` stored entries per column. ``B`` holds
    the side coefficients, one column per center.
    """

    spec: KernelSpec
    members: np.ndarray = field(repr=False)
    coef: np.ndarray = field(repr=False)
    B: np.ndarray = field(repr=False)
    A: sp.csc_matrix = field(init=False, repr=False)

    def __post_init__(self):
        N, M = self.members.shape
        A = sp.csc_matrix(
            (self.coef.ravel(), self.members.ravel(), np.arange(0, N * M + 1, M)), shape=(N, N)
        )
        object.__setattr__(self, "A", A)

    @property
    def N(self) -> int:
        return self.members.shape[0]

    @property
    def M(self) -> int:
        return self.members.shape[1]

    @property
    def Q(self) -> int:
        return self.B.shape[0]

    @property
    def footprints(self) -> list[LocalFootprint]:
        return [LocalFootprint(i, tuple(int(j) for j in row)) for i, row in enumerate(self.members)]

    def apply_coefficients(self, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Kernel and side coefficients ``(A c, B c)`` of ``sum_xi c_xi chi~_xi``."""
        return self.A @ c, self.B @ c


def _solve_chunk(spec: KernelSpec, points: np.ndarray, members: np.ndarray, first: int):
    M = members.shape[1]
    Q = spec.Q
    P = points[members]  # (n, M, 3)
    n = len(members)
    S = np.zeros((n, M + Q, M + Q))
    for i in range(n):
        S[i, :M, :M] = kernel_matrix(spec, P[i], P[i])
    Phi = np.stack([side_basis(spec, P[i]) for i in range(n)])
    sv = np.linalg.svd(Phi, compute_uv=False)
    rank = np.sum(sv > UNISOLVENCE_RTOL * sv[:, :1], axis=1)
    bad = np.flatnonzero(rank < Q)
    if bad.size:
        i = int(bad[0])
        raise LocalUnisolventError(first + i, int(rank[i]), Q)
    S[:, :M, M:] = Phi
    S[:, M:, :M] = Phi.transpose(0, 2, 1)
    rhs = np.zeros((n, M + Q, 1))
    rhs[:, 0, 0] = 1.0
    sol = np.linalg.solve(S, rhs)[..., 0]
    return sol[:, :M], sol[:, M:]


def build_local_basis(
    spec: KernelSpec,
    nodes: NodeSet,
    index: NeighborIndex | None = None,
    M: int | None = None,
    chunk: int = 256,
    workers: int = 1,
) -> SparseLocalBasis:
    """Local Lagrange functions on ``M``-point nearest-neighbor footprints.

    Every local system is ``(M + Q) x (M + Q)`` and solved by LU with partial
    pivoting independently of the others, so the result does not depend on
    ``chunk`` or ``workers``.
    """
    N = nodes.N
    Q = spec.Q
    if M is None:
        M = footprint_count(N)
    if not Q + 1 <= M <= N:
        raise ValueError(f"footprint size M={M} must satisfy {Q + 1} <= M <= N={N}")
    if index is None:
        index = NeighborIndex(nodes)
    members = index.knn_all(M)
    pts = nodes.points
    starts = list(range(0, N, chunk))

    def run(i0):
        return _solve_chunk(spec, pts, members[i0 : i0 + chunk], i0)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(i0) for i0 in starts]
    a = np.concatenate([p[0] for p in parts])
    b = np.concatenate([p[1] for p in parts])
    return SparseLocalBasis(spec, members, a, np.ascontiguousarray(b.T))


# -- truncation of full Lagrange functions ---------------------------------


@dataclass(frozen=True)
class TruncationSpec:
    """Keep the ``value`` nearest centers (``mode="count"``) or the centers
    within ``r = value * h * |ln h|`` (``mode="radius"``)."""

    mode: str
    value: float

    def __post_init__(self):
        if self.mode not in ("count", "radius"):
            raise ValueError(f"unknown truncation mode {self.mode!r}")
        if self.value <= 0:
            raise ValueError("truncation parameter must be positive")

    @classmethod
    def by_count(cls, M: int) -> "TruncationSpec":
        return cls("count", int(M))

    @classmethod
    def by_radius(cls, K: float) -> "TruncationSpec":
        return cls("radius", float(K))

    def radius(self, h: float) -> float:
        return self.value * h * abs(math.log(h))


def retained_set(nodes: NodeSet, xi: int, tspec: TruncationSpec, h: float,
                 index: NeighborIndex | None = None) -> np.ndarray:
    index = index or NeighborIndex(nodes)
    if tspec.mode == "count":
        return index.knn(xi, min(int(tspec.value), nodes.N))
    return index.within(xi, tspec.radius(h))


def truncate_lagrange(full: LagrangeCoeffMatrix, nodes: NodeSet, xi: int, tspec: TruncationSpec,
                      h: float, index: NeighborIndex | None = None) -> sp.csc_matrix:
    """Column ``xi`` of the full coefficient matrix restricted to the retained set,
    as an ``(N, 1)`` sparse column. No re-solve."""
    rows = np.sort(retained_set(nodes, xi, tspec, h, index))
    vals = full.A[rows, xi]
    return sp.csc_matrix((vals, rows, np.array([0, len(rows)])), shape=(nodes.N, 1))


def truncation_error(spec: KernelSpec, nodes: NodeSet, full_col, trunc_col, grid,
                     block: int = 4096) -> float:
    """``sup_grid |chi - chi~|``; only the cut kernels contribute (side part is shared)."""
    full_col = np.asarray(full_col, dtype=float).ravel()
    if sp.issparse(trunc_col):
        trunc_col = trunc_col.toarray()
    diff = full_col - np.asarray(trunc_col, dtype=float).ravel()
    cut = np.flatnonzero(diff)
    if cut.size == 0:
        return 0.0
    grid = np.atleast_2d(grid)
    centers = nodes.points[cut]
    worst = 0.0
    for i0 in range(0, len(grid), block):
        vals = kernel_matrix(spec, grid[i0 : i0 + block], centers) @ diff[cut]
        worst = max(worst, float(np.abs(vals).max()))
    return worst


# -- basis files -----------------------------------------------------------


def write_basis(path, basis: SparseLocalBasis) -> None:
    """Text file: ``# N M Q`` header, ``col row value`` triplets for ``A``, then
    ``col j value`` for ``B``."""
    N, M, Q = basis.N, basis.M, basis.Q
    lines = [f"# {N} {M} {Q}", "# A: col row value"]
    members, coef = basis.members, basis.coef
    for col in range(N):
        lines += [f"{col} {int(r)} {v:.17g}" for r, v in zip(members[col], coef[col])]
    lines.append("# B: col j value")
    for col in range(N):
        lines += [f"{col} {j} {basis.B[j, col]:.17g}" for j in range(Q)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_basis(path, spec: KernelSpec) -> SparseLocalBasis:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    N, M, Q = (int(t) for t in text[0].lstrip("#").split())
    if Q != spec.Q:
        raise ValueError(f"file has Q={Q}, kernel {spec} needs Q={spec.Q}")
    body = [ln for ln in text[1:] if ln.strip() and not ln.startswith("#")]
    if len(body) != N * M + N * Q:
        raise ValueError(f"expected {N * M + N * Q} data rows, found {len(body)}")
    tri = np.array([ln.split() for ln in body[: N * M]], dtype=float)
    if not np.array_equal(tri[:, 0].astype(int), np.repeat(np.arange(N), M)):
        raise ValueError("A triplets must list M entries per column in column order")
    members = tri[:, 1].astype(int).reshape(N, M)
    B = np.zeros((Q, N))
    for ln in body[N * M :]:
        c, j, v = ln.split()
        B[int(j), int(c)] = float(v)
    return SparseLocalBasis(spec, members, tri[:, 2].reshape(N, M), B)
