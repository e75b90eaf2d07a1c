"""Dense saddle-point interpolation and the full Lagrange coefficient matrix."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import ConditioningError, NonUnisolventError, ResourceCapError
from .geometry import NodeSet
from .kernels import KernelSpec, kernel_matrix, side_basis

DENSE_CAP = 4000
UNISOLVENCE_RTOL = 1e-10


def side_rank(Phi: np.ndarray) -> int:
    """Numerical rank of ``Phi`` with tolerance ``1e-10 * ||Phi||_2``."""
    sv = np.linalg.svd(Phi, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return 0
    return int(np.sum(sv > UNISOLVENCE_RTOL * sv[0]))


@dataclass(frozen=True, eq=False)
class SaddleSystem:
    """Collocation matrix ``K``, side-basis samples ``Phi`` and the LU of
    ``[[K, Phi], [Phi^T, 0]]`` (computed on first use)."""

    spec: KernelSpec
    nodes: NodeSet
    K: np.ndarray = field(repr=False)
    Phi: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.nodes.N

    @property
    def Q(self) -> int:
        return self.spec.Q

    def matrix(self) -> np.ndarray:
        Q = self.Q
        return np.block([[self.K, self.Phi], [self.Phi.T, np.zeros((Q, Q))]])

    @cached_property
    def _lu(self):
        S = self.matrix()
        lu, piv = sla.lu_factor(S, check_finite=False)
        anorm = np.abs(S).sum(axis=0).max()
        rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
        if info != 0 or not rcond > np.finfo(float).eps:
            raise ConditioningError(np.inf if rcond == 0 else 1.0 / rcond)
        return lu, piv

    def condition_estimate(self) -> float:
        """1-norm condition estimate of the saddle matrix."""
        lu, _ = self._lu
        S = self.matrix()
        rcond, _ = sla.lapack.dgecon(lu, np.abs(S).sum(axis=0).max(), norm="1")
        return 1.0 / rcond

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the full saddle system for one or many right-hand sides."""
        return sla.lu_solve(self._lu, rhs, check_finite=False)


@dataclass(frozen=True)
class InterpolantCoeffs:
    a: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class LagrangeCoeffMatrix:
    """Column ``eta`` of ``A`` (``B``) holds the kernel (side) coefficients of chi_eta."""

    A: np.ndarray
    B: np.ndarray

    def column(self, eta: int) -> InterpolantCoeffs:
        return InterpolantCoeffs(self.A[:, eta], self.B[:, eta])


def assemble(spec: KernelSpec, nodes: NodeSet) -> SaddleSystem:
    if nodes.manifold is not spec.manifold:
        raise ValueError(f"kernel {spec} lives on {spec.manifold.value}, nodes on {nodes.manifold.value}")
    if nodes.N < spec.Q:
        raise NonUnisolventError(nodes.N, spec.Q, where=f"only {nodes.N} nodes")
    Phi = side_basis(spec, nodes.points)
    rank = side_rank(Phi)
    if rank < spec.Q:
        raise NonUnisolventError(rank, spec.Q)
    K = kernel_matrix(spec, nodes.points, nodes.points)
    return SaddleSystem(spec, nodes, K, Phi)


def solve_saddle(system: SaddleSystem, y) -> InterpolantCoeffs:
    y = np.asarray(y, dtype=float)
    if y.shape != (system.N,):
        raise ValueError(f"expected {system.N} data values, got shape {y.shape}")
    sol = system.solve(np.concatenate([y, np.zeros(system.Q)]))
    return InterpolantCoeffs(sol[: system.N], sol[system.N :])


def lagrange_all(system: SaddleSystem, dense_cap: int = DENSE_CAP) -> LagrangeCoeffMatrix:
    """All Lagrange functions from one factorization (``N`` right-hand sides)."""
    N = system.N
    if N > dense_cap:
        raise ResourceCapError(
            f"N={N} exceeds the dense cap {dense_cap}; use the local basis instead"
        )
    rhs = np.zeros((N + system.Q, N))
    rhs[np.arange(N), np.arange(N)] = 1.0
    sol = system.solve(rhs)
    return LagrangeCoeffMatrix(sol[:N], sol[N:])


def evaluate(spec: KernelSpec, nodes: NodeSet, coeffs: InterpolantCoeffs, x, block: int = 4096):
    """``sum_xi a_xi k(x, xi) + sum_j b_j phi_j(x)`` at one point or an ``(n, 3)`` array."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    out = side_basis(spec, X) @ coeffs.b
    for i0 in range(0, len(X), block):
        out[i0 : i0 + block] += kernel_matrix(spec, X[i0 : i0 + block], nodes.points) @ coeffs.a
    return float(out[0]) if single else out


def write_lagrange_csv(path, coeffs: LagrangeCoeffMatrix, threshold: float = 0.0) -> int:
    """Dump ``eta_index,xi_index,coefficient`` rows with ``|coefficient| > threshold``
    (``threshold = 0`` dumps every entry). Returns the row count."""
    A = coeffs.A
    rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["eta_index", "xi_index", "coefficient"])
        for eta in range(A.shape[1]):
            col = A[:, eta]
            keep = np.arange(len(col)) if threshold <= 0 else np.flatnonzero(np.abs(col) > threshold)
            for xi in keep:
                w.writerow([eta, int(xi), f"{col[xi]:.17g}"])
                rows += 1
    return rows
