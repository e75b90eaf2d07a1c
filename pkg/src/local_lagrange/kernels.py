"""Restricted surface splines on S^2, the thin plate spline on the torus, and
their side bases.

Kernel evaluation is written elementwise (no BLAS dot products), so
``kernel_matrix(spec, X, Y) == kernel_matrix(spec, Y, X).T`` holds bit for bit.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .geometry import Manifold, NodeSet

SINGULAR_TOL = 1e-15


@dataclass(frozen=True)
class KernelSpec:
    """``variant`` is ``"s2-tps"`` (order ``m``) or ``"torus-tps"``."""

    variant: str
    m: int = 2
    d: int = 2

    def __post_init__(self):
        if self.variant not in ("s2-tps", "torus-tps"):
            raise ValueError(f"unknown kernel variant {self.variant!r}")
        if self.variant == "s2-tps" and self.m not in (2, 3):
            raise ValueError(f"sphere surface spline order m={self.m} is unsupported (m in {{2, 3}})")
        if self.variant == "torus-tps" and self.m != 2:
            raise ValueError("the torus thin plate spline has m = 2")

    @classmethod
    def sphere(cls, m: int = 2) -> "KernelSpec":
        return cls("s2-tps", m)

    @classmethod
    def torus(cls) -> "KernelSpec":
        return cls("torus-tps", 2)

    @property
    def manifold(self) -> Manifold:
        return Manifold.SPHERE2 if self.variant == "s2-tps" else Manifold.TORUS

    @property
    def Q(self) -> int:
        return 9 if (self.variant == "s2-tps" and self.m == 3) else 4

    def __str__(self) -> str:
        return f"s2-tps:m={self.m}" if self.variant == "s2-tps" else "torus-tps"


def parse_kernel(text: str) -> KernelSpec:
    """Parse ``"s2-tps:m=2"``, ``"s2-tps:m=3"`` or ``"torus-tps"``."""
    text = text.strip().lower()
    if text == "torus-tps":
        return KernelSpec.torus()
    match = re.fullmatch(r"s2-tps(?::m=(\d+))?", text)
    if not match:
        raise ValueError(f"unrecognized kernel {text!r}")
    return KernelSpec.sphere(int(match.group(1) or 2))


def _pairwise(X, Y):
    X = np.atleast_2d(np.asarray(X, dtype=float))[:, None, :]
    Y = np.atleast_2d(np.asarray(Y, dtype=float))[None, :, :]
    return X, Y


def kernel_matrix(spec: KernelSpec, X, Y) -> np.ndarray:
    """Matrix ``k(X[i], Y[j])``."""
    X, Y = _pairwise(X, Y)
    if spec.variant == "s2-tps":
        t = X[..., 0] * Y[..., 0] + X[..., 1] * Y[..., 1] + X[..., 2] * Y[..., 2]
        s = 1.0 - np.clip(t, -1.0, 1.0)
        # below the threshold use the analytic limit 0 (log(1) = 0)
        logs = np.log(np.where(s > SINGULAR_TOL, s, 1.0))
        return s * logs if spec.m == 2 else s ** (spec.m - 1) * logs
    r2 = (X[..., 0] - Y[..., 0]) ** 2 + (X[..., 1] - Y[..., 1]) ** 2 + (X[..., 2] - Y[..., 2]) ** 2
    # r <= 1e-15  <=>  r^2 <= 1e-30
    return 0.5 * r2 * np.log(np.where(r2 > SINGULAR_TOL**2, r2, 1.0))


def kernel_eval(spec: KernelSpec, x, y) -> float:
    return float(kernel_matrix(spec, x, y)[0, 0])


def side_basis(spec: KernelSpec, X) -> np.ndarray:
    """Side-basis samples, shape ``(n, Q)``.

    Column order: ``1, x, y, z`` and, for ``m = 3``, ``xy, yz, xz, x^2 - y^2,
    3 z^2 - 1``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    x, y, z = X[:, 0], X[:, 1], X[:, 2]
    cols = [np.ones_like(x), x, y, z]
    if spec.Q == 9:
        cols += [x * y, y * z, x * z, x * x - y * y, 3.0 * z * z - 1.0]
    return np.stack(cols, axis=1)


def side_basis_eval(spec: KernelSpec, x) -> np.ndarray:
    return side_basis(spec, x)[0]


def cpd_quadratic_form(spec: KernelSpec, nodes: NodeSet, a) -> float:
    """``sum_i sum_j a_i a_j k(xi_i, xi_j)``."""
    a = np.asarray(a, dtype=float)
    if a.shape != (nodes.N,):
        raise ValueError(f"expected {nodes.N} coefficients, got shape {a.shape}")
    K = kernel_matrix(spec, nodes.points, nodes.points)
    return float(np.sum(a[:, None] * K * a[None, :]))
