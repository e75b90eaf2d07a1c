"""Matrix-free preconditioned operator ``[K Phi][A; B]`` and GMRES."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceError, NumericalError
from .geometry import NodeSet
from .kernels import KernelSpec, kernel_matrix, side_basis
from .localbasis import SparseLocalBasis

BREAKDOWN_TOL = 1e-14


def kernel_matvec(spec: KernelSpec, X: np.ndarray, centers: np.ndarray, a: np.ndarray,
                  block: int = 512, workers: int = 1) -> np.ndarray:
    """``K(X, centers) @ a`` computed in row blocks; ``a`` may be 1-D or 2-D.

    Only ``block x len(centers)`` kernel values exist at a time. Each row block
    is accumulated independently, so the result depends on ``block`` but not
    on ``workers``.
    """
    out = np.empty((len(X),) + a.shape[1:])
    starts = range(0, len(X), block)

    def run(i0):
        out[i0 : i0 + block] = kernel_matrix(spec, X[i0 : i0 + block], centers) @ a

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(run, starts))
    else:
        for i0 in starts:
            run(i0)
    return out


@dataclass(frozen=True, eq=False)
class PreconditionedOperator:
    """``c -> K (A c) + Phi (B c)`` without forming ``K``."""

    spec: KernelSpec
    nodes: NodeSet
    basis: SparseLocalBasis
    block: int = 512
    workers: int = 1
    Phi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "Phi", side_basis(self.spec, self.nodes.points))

    @property
    def N(self) -> int:
        return self.nodes.N

    def interpolant_values(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Values ``K a + Phi b`` at the nodes."""
        pts = self.nodes.points
        return kernel_matvec(self.spec, pts, pts, a, self.block, self.workers) + self.Phi @ b

    def apply(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if c.shape[0] != self.N:
            raise ValueError(f"expected {self.N} coefficients, got shape {c.shape}")
        a, b = self.basis.apply_coefficients(c)
        return self.interpolant_values(a, b)

    __call__ = apply

    def dense(self) -> np.ndarray:
        """The operator as a dense matrix (small ``N`` only; for checking)."""
        pts = self.nodes.points
        K = kernel_matrix(self.spec, pts, pts)
        return K @ self.basis.A.toarray() + self.Phi @ self.basis.B


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-6
    max_iter: int = 200
    restart: int | None = None

    def __post_init__(self):
        if not 0.0 < self.tol < 1.0:
            raise ValueError("tol must lie in (0, 1)")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.restart is not None and self.restart < 1:
            raise ValueError("restart must be positive")


@dataclass
class SolveReport:
    iterations: int
    residual_history: list[float]
    converged: bool
    wall_time: float

    def as_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "residuals": list(self.residual_history),
            "converged": self.converged,
            "wall_time_s": self.wall_time,
        }


def gmres(apply, f, x0=None, cfg: GmresConfig | None = None):
    """GMRES for ``apply(c) = f`` with Arnoldi (modified Gram-Schmidt) and
    Givens rotations.

    ``x0`` defaults to ``f``. Stops when ``||f - apply(c)|| / ||f|| <= tol`` or
    after ``max_iter`` Arnoldi steps; ``residual_history`` starts with the
    relative residual of ``x0``. Hitting ``max_iter`` returns an unconverged
    report rather than raising.
    """
    cfg = cfg or GmresConfig()
    t0 = time.perf_counter()
    f = np.asarray(f, dtype=float)
    fnorm = np.linalg.norm(f)
    if fnorm == 0.0:
        return np.zeros_like(f), SolveReport(0, [], True, time.perf_counter() - t0)
    x = f.copy() if x0 is None else np.array(x0, dtype=float)

    r = f - apply(x)
    rel = np.linalg.norm(r) / fnorm
    history = [rel]
    iters = 0
    while rel > cfg.tol and iters < cfg.max_iter:
        m = min(cfg.restart or cfg.max_iter, cfg.max_iter - iters)
        beta = rel * fnorm
        V = np.zeros((m + 1, len(f)))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        k = 0
        breakdown = False
        for j in range(m):
            w = apply(V[j])
            for i in range(j + 1):
                H[i, j] = V[i] @ w
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            breakdown = H[j + 1, j] < BREAKDOWN_TOL * beta
            if not breakdown:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                hi = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = hi
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            iters += 1
            history.append(abs(g[j + 1]) / fnorm)
            if history[-1] <= cfg.tol or breakdown:
                break
        y = sla.solve_triangular(H[:k, :k], g[:k])
        x = x + V[:k].T @ y
        if breakdown or cfg.restart is not None:
            r = f - apply(x)
            rel = np.linalg.norm(r) / fnorm
        else:
            rel = history[-1]
        if breakdown:
            if rel > cfg.tol:
                raise NumericalError(
                    f"GMRES breakdown after {iters} iterations with residual {rel:.3e}"
                )
            history[-1] = max(min(rel, history[-1]), np.finfo(float).tiny)
            break
    return x, SolveReport(iters, history, bool(rel <= cfg.tol), time.perf_counter() - t0)


def solve_interpolation(spec: KernelSpec, nodes: NodeSet, basis: SparseLocalBasis, f,
                        cfg: GmresConfig | None = None, block: int = 512, workers: int = 1):
    """Interpolate ``f`` in the local basis, then map back to kernel coefficients.

    Returns ``(a, b, report)`` with ``a = A c`` and ``b = B c``. Raises
    ``ConvergenceError`` if GMRES stalls and ``NumericalError`` if the node
    residual exceeds ``10 * tol * ||f||_inf``.
    """
    cfg = cfg or GmresConfig()
    op = PreconditionedOperator(spec, nodes, basis, block=block, workers=workers)
    f = np.asarray(f, dtype=float)
    c, report = gmres(op.apply, f, None, cfg)
    if not report.converged:
        raise ConvergenceError(report)
    a, b = basis.apply_coefficients(c)
    resid = np.abs(op.interpolant_values(a, b) - f).max()
    if resid > 10.0 * cfg.tol * np.abs(f).max():
        raise NumericalError(f"node residual {resid:.3e} exceeds 10*tol*||f||_inf")
    return a, b, report
