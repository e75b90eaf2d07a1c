"""Decay fits for Lagrange functions and coefficients, and L_p stability ratios.

Decay is modelled as ``v = C exp(-nu s)`` with ``s = distance / h``. Fits are
least squares on ``(s, log10 v)`` over the window ``v > floor, s > s_min``;
``nu`` is reported in natural-log units and ``logC`` in log10.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LocalLagrangeError
from .geometry import (
    Manifold,
    MeshStats,
    NodeSet,
    fibonacci_points,
    separation_radius,
    TORUS_MAJOR,
    TORUS_MINOR,
    torus_angles,
)
from .interpolate import InterpolantCoeffs, LagrangeCoeffMatrix, evaluate
from .kernels import KernelSpec, side_basis
from .localbasis import SparseLocalBasis
from .solver import kernel_matvec

DEFAULT_FLOOR = 1e-9
DEFAULT_S_MIN = 2.0
MIN_FIT_SAMPLES = 5


class FitWindowError(LocalLagrangeError, ValueError):
    pass


@dataclass(frozen=True)
class LatitudinalProfile:
    """Per-latitude max of ``|f|``; latitude is the angle from the grid pole."""

    latitudes: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class DecayFit:
    nu: float
    logC: float
    r2: float
    n_used: int
    floor: float
    logC_scaled: float | None = None

    @property
    def C(self) -> float:
        return 10.0**self.logC

    @property
    def C_scaled(self) -> float | None:
        return None if self.logC_scaled is None else 10.0**self.logC_scaled


@dataclass(frozen=True)
class StabilityReport:
    p: float
    ratio_min: float
    ratio_max: float
    trials: int
    seed: int
    ratios: tuple[float, ...] = ()


# -- grids -----------------------------------------------------------------


def rotation_to(pole) -> np.ndarray:
    """Rotation taking (0, 0, 1) to the unit vector ``pole``."""
    pole = np.asarray(pole, dtype=float)
    pole = pole / np.linalg.norm(pole)
    z = np.array([0.0, 0.0, 1.0])
    c = float(z @ pole)
    if c < 0.0:
        # Rodrigues loses accuracy near -z: go to -pole, then half-turn about x
        return rotation_to(-pole) @ np.diag([1.0, -1.0, -1.0])
    v = np.cross(z, pole)
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx / (1.0 + c)


def lat_lon_grid(n0: int, n1: int, pole=(0.0, 0.0, 1.0)):
    """``n0`` equispaced latitudes in [0, pi] (both poles included) times ``n1``
    equispaced longitudes in [0, 2 pi), rotated so latitude 0 sits at ``pole``.

    Returns ``(latitudes, points)`` with ``points`` of shape ``(n0, n1, 3)``.
    """
    lat = np.linspace(0.0, math.pi, n0)
    lon = np.linspace(0.0, 2.0 * math.pi, n1, endpoint=False)
    st = np.sin(lat)[:, None]
    pts = np.stack(
        [st * np.cos(lon)[None, :], st * np.sin(lon)[None, :], np.cos(lat)[:, None] + 0 * lon[None, :]],
        axis=-1,
    )
    pts = pts @ rotation_to(pole).T
    return lat, pts / np.linalg.norm(pts, axis=-1, keepdims=True)


def latitudinal_max(spec: KernelSpec, nodes: NodeSet, coeffs: InterpolantCoeffs,
                    n0: int, n1: int, pole=None) -> LatitudinalProfile:
    """Evaluate on the ``n0 x n1`` grid about ``pole`` (default north pole) and
    take the max of ``|value|`` along each latitude."""
    if nodes.manifold is not Manifold.SPHERE2:
        raise ValueError("latitudinal profiles are defined on the sphere")
    lat, pts = lat_lon_grid(n0, n1, (0.0, 0.0, 1.0) if pole is None else pole)
    vals = evaluate(spec, nodes, coeffs, pts.reshape(-1, 3)).reshape(n0, n1)
    return LatitudinalProfile(lat, np.abs(vals).max(axis=1))


# -- fits ------------------------------------------------------------------


def _line(x, y):
    X = np.stack([np.ones_like(x), x], axis=1)
    (intercept, slope), *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - (intercept + slope * x)
    return intercept, slope, float(resid @ resid)


def _make_fit(x, y, floor) -> DecayFit:
    intercept, slope, sse = _line(x, y)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    # flat data: r2 is undefined, report 0 rather than round-off noise
    flat = ss_tot <= len(y) * (4 * np.finfo(float).eps * max(1.0, float(np.abs(y).max()))) ** 2
    r2 = 0.0 if flat else 1.0 - sse / ss_tot
    return DecayFit(
        nu=float(-slope * math.log(10.0)),
        logC=float(intercept),
        r2=min(max(r2, 0.0), 1.0),
        n_used=len(x),
        floor=floor,
    )


def _window(s, v, floor, s_min):
    s = np.asarray(s, dtype=float)
    v = np.abs(np.asarray(v, dtype=float))
    keep = (v > floor) & (s > s_min) & np.isfinite(v)
    n = int(keep.sum())
    if n < MIN_FIT_SAMPLES:
        raise FitWindowError(
            f"only {n} samples with v > {floor:g} and s > {s_min:g}; try a smaller floor"
        )
    order = np.argsort(s[keep], kind="stable")
    return s[keep][order], np.log10(v[keep][order])


def fit_decay(s, v, floor: float = DEFAULT_FLOOR, s_min: float = DEFAULT_S_MIN) -> DecayFit:
    """Fit ``v = C exp(-nu s)`` on the window ``v > floor`` and ``s > s_min``."""
    x, y = _window(s, v, floor, s_min)
    return _make_fit(x, y, floor)


def fit_leading_decay(s, v, floor: float = DEFAULT_FLOOR, s_min: float = DEFAULT_S_MIN) -> DecayFit:
    """Exponential fit to the leading segment of the window.

    The windowed samples (sorted by ``s``) are split at the breakpoint that
    minimizes the summed squared residuals of two independent lines in
    ``(s, log10 v)``; the first segment is fitted. Use this when the data
    leave the exponential regime above ``floor`` (a slow tail or a rise).
    """
    x, y = _window(s, v, floor, s_min)
    n = len(x)
    best_k, best_sse = n, _line(x, y)[2]
    for k in range(MIN_FIT_SAMPLES, n - 1):
        sse = _line(x[:k], y[:k])[2] + _line(x[k:], y[k:])[2]
        if sse < best_sse:
            best_k, best_sse = k, sse
    return _make_fit(x[:best_k], y[:best_k], floor)


def coefficient_decay(A: LagrangeCoeffMatrix, nodes: NodeSet, xi: int, stats: MeshStats,
                      floor: float = DEFAULT_FLOOR, s_min: float = DEFAULT_S_MIN,
                      spec: KernelSpec | None = None) -> DecayFit:
    """Fit the decay of ``|A[zeta, xi]|`` against ``d(xi, zeta) / h`` for ``zeta != xi``.

    ``logC_scaled`` is ``logC + (2m - d) log10 q``, which removes the
    ``q^(d - 2m)`` growth of raw coefficient magnitudes with ``N``.
    """
    col = np.abs(A.A[:, xi])
    d = nodes.distance(nodes.points[xi], nodes.points)
    mask = np.arange(nodes.N) != xi
    fit = fit_decay(d[mask] / stats.h, col[mask], floor, s_min)
    m, dim = (spec.m, spec.d) if spec is not None else (2, 2)
    scaled = fit.logC + (2 * m - dim) * math.log10(stats.q)
    return DecayFit(fit.nu, fit.logC, fit.r2, fit.n_used, fit.floor, scaled)


def lagrange_decay(profile: LatitudinalProfile, stats: MeshStats,
                   floor: float = DEFAULT_FLOOR, s_min: float = DEFAULT_S_MIN) -> DecayFit:
    return fit_decay(profile.latitudes / stats.h, profile.values, floor, s_min)


def torus_directional_distances(nodes: NodeSet, xi: int) -> tuple[np.ndarray, np.ndarray]:
    """Distances from ``xi`` along the ``u`` and ``v`` coordinate circles.

    ``u``: angle difference around the axis times ``3 + cos v_xi``, the radius
    of the ``u`` circle through ``xi``. ``v``: tube-angle difference times the
    tube radius. For ``xi = (4, 0, 0)`` both are geodesic distances.
    """
    if nodes.manifold is not Manifold.TORUS:
        raise ValueError("directional distances are defined on the torus")
    u, v = torus_angles(nodes.points)
    du = np.abs(np.angle(np.exp(1j * (u - u[xi])))) * (TORUS_MAJOR + TORUS_MINOR * np.cos(v[xi]))
    dv = np.abs(np.angle(np.exp(1j * (v - v[xi])))) * TORUS_MINOR
    return du, dv


def torus_coefficient_decay(A: LagrangeCoeffMatrix, nodes: NodeSet, xi: int, stats: MeshStats,
                            direction: str, band: float = 1.0, floor: float = DEFAULT_FLOOR,
                            s_min: float = DEFAULT_S_MIN) -> DecayFit:
    """Coefficient decay along the ``u`` (longitudinal) or ``v`` (latitudinal) circle.

    Samples are the coefficients of nodes within ``band * h`` of the
    coordinate circle through ``xi`` (measured in the other direction),
    against their distance along it. Away from the center the torus
    coefficients leave the exponential regime well above round-off (a slow
    tail along ``u``; a rise toward the inner equator along ``v``), so the
    leading segment is fitted.
    """
    du, dv = torus_directional_distances(nodes, xi)
    if direction == "u":
        along, across = du, dv
    elif direction == "v":
        along, across = dv, du
    else:
        raise ValueError("direction must be 'u' or 'v'")
    mask = (np.arange(nodes.N) != xi) & (across <= band * stats.h)
    return fit_leading_decay(along[mask] / stats.h, A.A[mask, xi], floor, s_min)


# -- stability -------------------------------------------------------------


def stability_ratio(spec: KernelSpec, nodes: NodeSet, basis: SparseLocalBasis, p: float,
                    trials: int = 10, seed: int = 0, vectors=None, quad_factor: int = 20,
                    block: int = 512) -> StabilityReport:
    """Ratios ``||sum a_xi chi~_xi||_Lp / (q^(2/p) ||a||_lp)`` for random ``a``.

    ``a`` has independent uniform +-1 entries (trial ``t`` uses seed
    ``seed + t``) unless ``vectors`` is given. Norms use ``quad_factor * N``
    Fibonacci points, with equal weights ``4 pi / n`` for ``p = 2`` and the
    maximum over the same points for ``p = inf``.
    """
    if nodes.manifold is not Manifold.SPHERE2:
        raise ValueError("stability ratios are computed on the sphere")
    if p not in (2, math.inf):
        raise ValueError("p must be 2 or inf")
    N = nodes.N
    if vectors is None:
        if trials <= 0:
            raise ValueError("need at least one trial")
        vectors = np.stack(
            [np.random.default_rng(seed + t).choice([-1.0, 1.0], size=N) for t in range(trials)],
            axis=1,
        )
    else:
        vectors = np.asarray(vectors, dtype=float).reshape(N, -1)
        if vectors.shape[1] == 0:
            raise ValueError("need at least one trial")
    n_quad = quad_factor * N
    X = fibonacci_points(n_quad)
    a = basis.A @ vectors
    b = basis.B @ vectors
    vals = kernel_matvec(spec, X, nodes.points, a, block) + side_basis(spec, X) @ b
    q = separation_radius(nodes)
    if p == 2:
        fn = np.sqrt(4.0 * math.pi / n_quad * np.sum(vals**2, axis=0))
        an = np.linalg.norm(vectors, axis=0)
        ratios = fn / (q * an)
    else:
        ratios = np.abs(vals).max(axis=0) / np.abs(vectors).max(axis=0)
    return StabilityReport(p, float(ratios.min()), float(ratios.max()), len(ratios), seed,
                           tuple(float(r) for r in ratios))


__all__ = [
    "DecayFit",
    "FitWindowError",
    "LatitudinalProfile",
    "StabilityReport",
    "coefficient_decay",
    "fit_decay",
    "lagrange_decay",
    "lat_lon_grid",
    "latitudinal_max",
    "stability_ratio",
    "torus_coefficient_decay",
    "torus_directional_distances",
    "fit_leading_decay",
]
