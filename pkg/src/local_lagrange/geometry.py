"""Node sets, distances, neighbor search and mesh statistics on S^2 and the torus.

Points are stored as ``(N, 3)`` float arrays in ambient coordinates. The torus
is the surface ``((3 + cos v) cos u, (3 + cos v) sin u, sin v)``: center-circle
radius 3, tube radius 1.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateNodesError, ResourceCapError


TORUS_MAJOR = 3.0
TORUS_MINOR = 1.0

CONSTRAINT_TOL = 1e-12
MAX_ICOSAHEDRAL_LEVEL = 7
MAX_PROBES = 1_000_000

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


class Manifold(str, enum.Enum):
    SPHERE2 = "sphere2"
    TORUS = "torus"


def constraint_residual(manifold: Manifold, points: np.ndarray) -> np.ndarray:
    """Per-point violation of the implicit surface equation."""
    points = np.atleast_2d(points)
    if manifold is Manifold.SPHERE2:
        return np.abs(np.einsum("ij,ij->i", points, points) - 1.0)
    rho = np.hypot(points[:, 0], points[:, 1])
    return np.abs((rho - TORUS_MAJOR) ** 2 + points[:, 2] ** 2 - TORUS_MINOR**2)


def project(manifold: Manifold, points: np.ndarray) -> np.ndarray:
    """Closest-point projection onto the manifold."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if manifold is Manifold.SPHERE2:
        return points / np.linalg.norm(points, axis=1, keepdims=True)
    u, v = torus_angles(points)
    return torus_point(u, v)


def torus_point(u, v) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    rad = TORUS_MAJOR + TORUS_MINOR * np.cos(v)
    return np.stack([rad * np.cos(u), rad * np.sin(u), TORUS_MINOR * np.sin(v)], axis=-1)


def torus_angles(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Parameters ``(u, v)`` in ``(-pi, pi]`` of the nearest torus point."""
    points = np.atleast_2d(points)
    u = np.arctan2(points[:, 1], points[:, 0])
    rho = np.hypot(points[:, 0], points[:, 1])
    v = np.arctan2(points[:, 2], rho - TORUS_MAJOR)
    return u, v


@dataclass(frozen=True)
class NodeSet:
    """An immutable set of distinct centers on one manifold."""

    manifold: Manifold
    points: np.ndarray = field(repr=False)

    def __post_init__(self):
        manifold = Manifold(self.manifold)
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (N, 3), got {pts.shape}")
        if len(pts) == 0:
            raise ValueError("empty node set")
        bad = constraint_residual(manifold, pts)
        if bad.max() > CONSTRAINT_TOL:
            i = int(np.argmax(bad))
            raise ValueError(
                f"point {i} violates the {manifold.value} constraint by {bad[i]:.3e}"
            )
        if len(pts) > 1:
            dist, _ = cKDTree(pts).query(pts, k=2)
            if dist[:, 1].min() == 0.0:
                i = int(np.argmin(dist[:, 1]))
                raise DegenerateNodesError(f"node {i} is duplicated")
        pts.setflags(write=False)
        object.__setattr__(self, "manifold", manifold)
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return len(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def distance(self, p: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Distance from ``p`` to each row of ``x``: geodesic on S^2, chordal on the torus."""
        if self.manifold is Manifold.SPHERE2:
            return geodesic_distance_s2(p, x)
        return np.linalg.norm(np.atleast_2d(x) - p, axis=-1)

    def nearest_node(self, p) -> int:
        d = np.linalg.norm(self.points - np.asarray(p, dtype=float), axis=1)
        return int(np.argmin(d))


def geodesic_distance_s2(p, q) -> np.ndarray | float:
    """Great-circle distance ``atan2(|p x q|, p.q)``; broadcasts over leading axes."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    cross = np.linalg.norm(np.cross(p, q), axis=-1)
    dot = np.sum(p * q, axis=-1)
    out = np.arctan2(cross, dot)
    return float(out) if out.ndim == 0 else out


def chord_to_geodesic(chord):
    return 2.0 * np.arcsin(np.minimum(np.asarray(chord) / 2.0, 1.0))


def geodesic_to_chord(angle):
    return 2.0 * np.sin(np.minimum(np.asarray(angle), math.pi) / 2.0)


# -- node families ---------------------------------------------------------


def _icosahedron() -> tuple[np.ndarray, list[tuple[int, int, int]]]:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
            [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
            [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
        ],
        dtype=float,
    )
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    return verts / np.linalg.norm(verts, axis=1, keepdims=True), faces


def gen_icosahedral(level: int) -> NodeSet:
    """Recursively bisected icosahedron with ``10 * 4**level + 2`` nodes.

    Edge midpoints are projected onto the sphere after each bisection. The
    twelve original vertices come first; new vertices are appended in the
    order their edges are first visited, so the ordering is reproducible.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    if level > MAX_ICOSAHEDRAL_LEVEL:
        raise ResourceCapError(
            f"icosahedral level {level} exceeds the cap {MAX_ICOSAHEDRAL_LEVEL}"
        )
    verts, faces = _icosahedron()
    pts = list(verts)
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in cache:
                mid = pts[i] + pts[j]
                pts.append(mid / np.linalg.norm(mid))
                cache[key] = len(pts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return NodeSet(Manifold.SPHERE2, project(Manifold.SPHERE2, np.array(pts)))


def fibonacci_points(n: int) -> np.ndarray:
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = GOLDEN_ANGLE * i
    pts = np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def gen_fibonacci(n: int) -> NodeSet:
    """Fibonacci spiral on S^2 (equal-area bands in z, golden-angle longitudes)."""
    if n < 4:
        raise ValueError("a Fibonacci node set needs n >= 4")
    return NodeSet(Manifold.SPHERE2, fibonacci_points(n))


def _torus_v_from_area_fraction(w: np.ndarray) -> np.ndarray:
    # invert the area CDF  (v + sin(v)/3) / (2 pi) = w  on [0, 2 pi)
    target = 2.0 * math.pi * np.asarray(w, dtype=float)
    v = target.copy()
    for _ in range(50):
        step = (v + np.sin(v) / TORUS_MAJOR - target) / (1.0 + np.cos(v) / TORUS_MAJOR)
        v -= step
        if np.max(np.abs(step)) < 1e-15:
            break
    return v


def torus_probe_points(n: int) -> np.ndarray:
    """Deterministic area-weighted lattice on the torus, used as a probe set."""
    i = np.arange(n, dtype=float)
    v = _torus_v_from_area_fraction((i + 0.5) / n)
    u = np.mod(GOLDEN_ANGLE * i, 2.0 * math.pi)
    return torus_point(u, v)


def gen_torus(n: int, seed: int = 0) -> NodeSet:
    """Seeded quasi-uniform torus nodes on staggered rings of constant ``v``.

    Ring spacing in ``v`` follows a hexagonal packing for the mean node area;
    ring ``j`` gets a share of the ``n`` nodes proportional to its length
    ``2 pi (3 + cos v_j)`` (area weighting), equispaced in ``u`` with a random
    phase drawn from ``seed``. Ring 0 sits at ``v = 0`` with phase 0, so
    ``(4, 0, 0)`` is always node 0.
    """
    if n < 10:
        raise ValueError("a torus node set needs n >= 10")
    rng = np.random.default_rng(seed)
    area = 4.0 * math.pi**2 * TORUS_MAJOR * TORUS_MINOR
    row = math.sqrt(math.sqrt(3.0) / 2.0 * area / n)
    n_rings = max(3, round(2.0 * math.pi * TORUS_MINOR / row))
    v = 2.0 * math.pi * np.arange(n_rings) / n_rings
    length = TORUS_MAJOR + TORUS_MINOR * np.cos(v)
    share = n * length / length.sum()
    counts = np.floor(share).astype(int)
    extra = n - counts.sum()
    counts[np.argsort(-(share - counts), kind="stable")[:extra]] += 1
    phase = rng.uniform(size=n_rings)
    phase[0] = 0.0
    pts = [
        torus_point(2.0 * math.pi * (np.arange(c) + ph) / c, np.full(c, vj))
        for c, ph, vj in zip(counts, phase, v)
        if c > 0
    ]
    return NodeSet(Manifold.TORUS, np.vstack(pts))


# -- neighbor search -------------------------------------------------------


class NeighborIndex:
    """k-nearest-neighbor queries under ambient (chordal) distance.

    On the sphere chordal order equals geodesic order. Ties are broken by
    ascending node index so footprints are reproducible.
    """

    def __init__(self, nodes: NodeSet):
        self.nodes = nodes
        self._tree = cKDTree(nodes.points)

    def knn(self, center: int, k: int) -> np.ndarray:
        N = self.nodes.N
        if not 1 <= k <= N:
            raise ValueError(f"k must be in [1, {N}], got {k}")
        pts = self.nodes.points
        p = pts[center]
        extra = min(N, k + 8)
        while True:
            _, idx = self._tree.query(p, k=extra)
            idx = np.atleast_1d(idx)
            d = np.linalg.norm(pts[idx] - p, axis=1)
            order = np.lexsort((idx, d))
            idx, d = idx[order], d[order]
            # a tie straddling the cut may hide a smaller index beyond the query
            if extra == N or d[k - 1] < d[-1]:
                break
            extra = min(N, 2 * extra)
        out = idx[:k]
        if out[0] != center:
            # self is always first (distance 0, nodes distinct)
            out = np.concatenate([[center], out[out != center]])[:k]
        return out

    def knn_all(self, k: int) -> np.ndarray:
        """``(N, k)`` array whose row ``i`` is ``knn(i, k)``."""
        return np.stack([self.knn(i, k) for i in range(self.nodes.N)])

    def within(self, center: int, radius: float) -> np.ndarray:
        """Nodes within intrinsic distance ``radius`` of ``center`` (ascending distance)."""
        pts = self.nodes.points
        p = pts[center]
        if self.nodes.manifold is Manifold.SPHERE2:
            if radius >= math.pi:
                idx = np.arange(self.nodes.N)
            else:
                idx = np.asarray(
                    self._tree.query_ball_point(p, geodesic_to_chord(radius) * (1 + 1e-12)),
                    dtype=int,
                )
        else:
            idx = np.asarray(self._tree.query_ball_point(p, radius), dtype=int)
        d = self.nodes.distance(p, pts[idx])
        keep = d <= radius
        idx, d = idx[keep], d[keep]
        return idx[np.lexsort((idx, d))]


# -- mesh statistics -------------------------------------------------------


@dataclass(frozen=True)
class MeshStats:
    """Fill distance estimate ``h``, separation radius ``q`` and ``rho = h / q``."""

    h: float
    q: float
    rho: float
    n_probe: int

    def as_dict(self) -> dict:
        return {"h": self.h, "q": self.q, "rho": self.rho, "n_probe": self.n_probe}


def default_probe_count(N: int) -> int:
    return min(100 * N, MAX_PROBES)


def probe_points(manifold: Manifold, n_probe: int) -> np.ndarray:
    if manifold is Manifold.SPHERE2:
        return fibonacci_points(n_probe)
    return torus_probe_points(n_probe)


def separation_radius(nodes: NodeSet) -> float:
    """Half the minimum pairwise distance (geodesic on S^2, chordal on the torus)."""
    if nodes.N < 2:
        raise ValueError("separation radius needs at least two nodes")
    dmin = cKDTree(nodes.points).query(nodes.points, k=2)[0][:, 1].min()
    if nodes.manifold is Manifold.SPHERE2:
        dmin = chord_to_geodesic(dmin)
    q = 0.5 * float(dmin)
    if q <= 0.0:
        raise DegenerateNodesError("separation radius is zero (duplicate nodes)")
    return q


def mesh_stats(nodes: NodeSet, n_probe: int | None = None) -> MeshStats:
    """Separation radius (exact) and fill distance (probe estimate, a lower bound).

    Distances are geodesic on the sphere and ambient Euclidean on the torus.
    """
    if nodes.N < 2:
        raise ValueError("mesh statistics need at least two nodes")
    if n_probe is None:
        n_probe = default_probe_count(nodes.N)
    q = separation_radius(nodes)
    probes = probe_points(nodes.manifold, n_probe)
    dfill = cKDTree(nodes.points).query(probes, k=1)[0].max()
    if nodes.manifold is Manifold.SPHERE2:
        dfill = chord_to_geodesic(dfill)
    h = float(dfill)
    return MeshStats(h=h, q=q, rho=h / q, n_probe=n_probe)


# -- node files ------------------------------------------------------------


READ_REJECT_TOL = 1e-6
READ_WARN_TOL = 1e-9


def write_nodes(path, nodes: NodeSet) -> None:
    lines = [f"# manifold: {nodes.manifold.value}", f"# N: {nodes.N}"]
    lines += [f"{x:.17g} {y:.17g} {z:.17g}" for x, y, z in nodes.points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_nodes(path) -> NodeSet:
    """Read a node file.

    Points off the manifold by more than 1e-6 are rejected; points off by more
    than 1e-9 are projected back with a warning; smaller residuals above the
    construction tolerance are projected silently.
    """
    manifold = None
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s[1:].strip()
            if body.lower().startswith("manifold:"):
                manifold = Manifold(body.split(":", 1)[1].strip().lower())
            continue
        parts = s.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{lineno}: expected 'x y z', got {s!r}")
        rows.append([float(t) for t in parts])
    if manifold is None:
        raise ValueError(f"{path}: missing '# manifold:' header")
    pts = np.array(rows, dtype=float).reshape(-1, 3)
    res = constraint_residual(manifold, pts)
    if len(res) and res.max() > READ_REJECT_TOL:
        i = int(np.argmax(res))
        raise ValueError(f"{path}: point {i} is {res[i]:.3e} off the {manifold.value}")
    if len(res) and res.max() > READ_WARN_TOL:
        warnings.warn(f"{path}: re-projecting points off the {manifold.value} by up to {res.max():.3e}")
    off = res > CONSTRAINT_TOL
    if off.any():
        pts[off] = project(manifold, pts[off])
    return NodeSet(manifold, pts)
