"""Convex polygonal domains, their boundaries, inner offsets and grids.

Every domain is a convex polygon stored with counterclockwise vertices.
Boundary points are addressed by arc length measured from vertex 0; at a
vertex the outward normal of the edge *starting* there is used (vertices
form a null set for every boundary integral, so the tie-break is harmless).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import linprog


class GeometryError(ValueError):
    pass


class NonConvex(GeometryError):
    pass


class DegenerateEdge(GeometryError):
    pass


class TooFewVertices(GeometryError):
    pass


class OutOfRange(GeometryError):
    pass


class EmptyErosion(GeometryError):
    pass


class NotNested(GeometryError):
    pass


class GridTooSmall(GeometryError):
    pass


GRID_MARGIN = 2

_EPS = 1e-12


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True, eq=False)
class Domain:
    """Convex polygon with counterclockwise vertices.

    Use :func:`build_convex_polygon` rather than the constructor; it
    validates and normalizes the vertex list.
    """

    vertices: tuple[tuple[float, float], ...]

    @cached_property
    def points(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        p = self.points
        return np.roll(p, -1, axis=0) - p

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.hypot(self.edge_vectors[:, 0], self.edge_vectors[:, 1])

    @property
    def edges(self) -> list[tuple[np.ndarray, np.ndarray]]:
        p = self.points
        return [(p[k], p[(k + 1) % len(p)]) for k in range(len(p))]

    @cached_property
    def directions(self) -> np.ndarray:
        return self.edge_vectors / self.edge_lengths[:, None]

    @cached_property
    def normals(self) -> np.ndarray:
        """Unit outward normals, one per edge."""
        d = self.directions
        return np.stack([d[:, 1], -d[:, 0]], axis=1)

    @cached_property
    def offsets(self) -> np.ndarray:
        # half-plane form <n_k, x> <= c_k
        return np.einsum("ij,ij->i", self.normals, self.points)

    @cached_property
    def cumulative_arc(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.edge_lengths)])

    @property
    def total_arc_length(self) -> float:
        return float(self.cumulative_arc[-1])

    @property
    def perimeter(self) -> float:
        return self.total_arc_length

    @cached_property
    def area(self) -> float:
        p = self.points
        return 0.5 * float(np.sum(_cross(p, np.roll(p, -1, axis=0))))

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        p = self.points
        return (float(p[:, 0].min()), float(p[:, 1].min()),
                float(p[:, 0].max()), float(p[:, 1].max()))

    @property
    def diameter(self) -> float:
        p = self.points
        diff = p[:, None, :] - p[None, :, :]
        return float(np.sqrt((diff ** 2).sum(-1)).max())

    def to_list(self) -> list[list[float]]:
        return [list(v) for v in self.vertices]

    def isclose(self, other: "Domain", tol: float = 1e-9) -> bool:
        """Same polygon up to a cyclic relabelling of vertices."""
        a, b = self.points, other.points
        if a.shape != b.shape:
            return False
        for shift in range(len(b)):
            if np.all(np.abs(a - np.roll(b, shift, axis=0)) <= tol):
                return True
        return False

    def __repr__(self) -> str:
        return f"Domain(vertices={self.to_list()})"


def build_convex_polygon(points: Sequence[Sequence[float]]) -> Domain:
    """Validate ``points`` as a convex simple polygon and orient it CCW."""
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2:
        raise GeometryError("points must be a list of 2D coordinates")
    if len(p) >= 2 and np.allclose(p[0], p[-1]):
        p = p[:-1]
    if len(p) < 3:
        raise TooFewVertices(f"need at least 3 vertices, got {len(p)}")
    if not np.all(np.isfinite(p)):
        raise GeometryError("non-finite vertex coordinates")

    edges = np.roll(p, -1, axis=0) - p
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    scale = max(float(np.abs(p).max()), 1.0)
    if np.any(lengths <= _EPS * scale):
        raise DegenerateEdge("polygon has a zero-length edge")

    turns = _cross(edges, np.roll(edges, -1, axis=0))
    tol = _EPS * scale * scale
    if np.all(np.abs(turns) <= tol):
        raise DegenerateEdge("all vertices are collinear")
    if np.any(np.abs(turns) <= tol):
        raise NonConvex("collinear consecutive edges (straight vertex)")
    if not (np.all(turns > 0) or np.all(turns < 0)):
        raise NonConvex("turn directions change sign")
    if turns[0] < 0:
        p = p[::-1]
        edges = np.roll(p, -1, axis=0) - p
    # convex turning with total winding 2*pi rules out self-intersection
    angles = np.arctan2(edges[:, 1], edges[:, 0])
    winding = np.sum(np.mod(np.diff(np.append(angles, angles[0])), 2 * np.pi))
    if abs(winding - 2 * np.pi) > 1e-6:
        raise NonConvex("polygon winds more than once")
    return Domain(tuple((float(x), float(y)) for x, y in p))


def diamond_domain() -> Domain:
    """The square rotated by 45 degrees, ``|x - 1| + |y| <= 1``."""
    return build_convex_polygon([(0, 0), (1, -1), (2, 0), (1, 1)])


def unit_square() -> Domain:
    return build_convex_polygon([(0, 0), (1, 0), (1, 1), (0, 1)])


def regular_hexagon(center=(1.0, 0.0), radius: float = 1.0) -> Domain:
    """Regular hexagon with a vertex on each side of the x axis extremes."""
    cx, cy = center
    ang = np.pi + np.arange(6) * np.pi / 3
    return build_convex_polygon(np.stack([cx + radius * np.cos(ang),
                                          cy + radius * np.sin(ang)], axis=1))


BUILTIN_DOMAINS = {
    "diamond": diamond_domain,
    "square": unit_square,
    "hexagon": regular_hexagon,
}


def _signed_edge_distance(d: Domain, pts: np.ndarray) -> np.ndarray:
    """c_k - <n_k, x> for every edge; positive inside."""
    return d.offsets[None, :] - pts @ d.normals.T


def contains(d: Domain, p) -> bool | np.ndarray:
    """Strict interior test. Accepts one point or an ``(..., 2)`` array."""
    pts = np.asarray(p, dtype=float)
    flat = pts.reshape(-1, 2)
    scale = max(float(np.abs(d.points).max()), 1.0)
    inside = np.all(_signed_edge_distance(d, flat) > _EPS * scale, axis=1)
    if pts.ndim == 1:
        return bool(inside[0])
    return inside.reshape(pts.shape[:-1])


def contains_closed(d: Domain, p, tol: float = 1e-9) -> bool | np.ndarray:
    pts = np.asarray(p, dtype=float)
    flat = pts.reshape(-1, 2)
    inside = np.all(_signed_edge_distance(d, flat) >= -tol, axis=1)
    if pts.ndim == 1:
        return bool(inside[0])
    return inside.reshape(pts.shape[:-1])


@dataclass(frozen=True)
class BoundaryPoint:
    arc_param: float
    position: tuple[float, float]
    outward_normal: tuple[float, float]
    edge: int


def boundary_points(d: Domain, s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized arc-length lookup: ``(positions, normals, edge_index)``.

    ``s`` is taken modulo the perimeter.
    """
    s = np.mod(np.asarray(s, dtype=float), d.total_arc_length)
    edge = np.searchsorted(d.cumulative_arc, s, side="right") - 1
    edge = np.clip(edge, 0, len(d.vertices) - 1)
    local = s - d.cumulative_arc[edge]
    pos = d.points[edge] + local[..., None] * d.directions[edge]
    return pos, d.normals[edge], edge


def boundary_point_at(d: Domain, s: float) -> BoundaryPoint:
    if not (0.0 <= s < d.total_arc_length):
        raise OutOfRange(f"arc parameter {s} outside [0, {d.total_arc_length})")
    pos, nrm, edge = boundary_points(d, np.array([s]))
    return BoundaryPoint(float(s), (float(pos[0, 0]), float(pos[0, 1])),
                         (float(nrm[0, 0]), float(nrm[0, 1])), int(edge[0]))


def nearest_boundary_point(d: Domain, pts) -> tuple[np.ndarray, np.ndarray]:
    """Closest point of the polygon boundary and its arc parameter."""
    pts = np.asarray(pts, dtype=float)
    flat = pts.reshape(-1, 2)
    a = d.points
    dirs = d.directions
    rel = flat[:, None, :] - a[None, :, :]
    tau = np.clip(np.einsum("pkj,kj->pk", rel, dirs), 0.0, d.edge_lengths[None, :])
    proj = a[None, :, :] + tau[..., None] * dirs[None, :, :]
    dist2 = ((flat[:, None, :] - proj) ** 2).sum(-1)
    k = np.argmin(dist2, axis=1)
    idx = np.arange(len(flat))
    best = proj[idx, k]
    s = d.cumulative_arc[k] + tau[idx, k]
    s = np.mod(s, d.total_arc_length)
    return best.reshape(pts.shape), s.reshape(pts.shape[:-1])


def project_to_closure(d: Domain, pts) -> np.ndarray:
    """Identity inside the closed polygon, nearest boundary point outside."""
    pts = np.asarray(pts, dtype=float)
    near, _ = nearest_boundary_point(d, pts)
    inside = contains_closed(d, pts, tol=0.0)
    return np.where(np.asarray(inside)[..., None], pts, near)


def distance_to_boundary(d: Domain, pts) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    near, _ = nearest_boundary_point(d, pts)
    return np.hypot(*(pts - near).reshape(-1, 2).T).reshape(pts.shape[:-1])


def inradius(d: Domain) -> float:
    """Radius of the largest inscribed disc (Chebyshev centre LP)."""
    n = d.normals
    a_ub = np.hstack([n, np.ones((len(n), 1))])
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=a_ub, b_ub=d.offsets,
                  bounds=[(None, None), (None, None), (0, None)], method="highs")
    return float(res.x[2])


def _clip_halfplane(poly: np.ndarray, normal: np.ndarray, c: float) -> np.ndarray:
    if len(poly) == 0:
        return poly
    out = []
    vals = poly @ normal - c
    m = len(poly)
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        vp, vq = vals[i], vals[(i + 1) % m]
        if vp <= 0:
            out.append(p)
        if (vp < 0 < vq) or (vq < 0 < vp):
            t = vp / (vp - vq)
            out.append(p + t * (q - p))
    return np.array(out).reshape(-1, 2)


def _clean_polygon(poly: np.ndarray, tol: float) -> np.ndarray:
    keep = []
    for p in poly:
        if not keep or np.hypot(*(p - keep[-1])) > tol:
            keep.append(p)
    if len(keep) > 1 and np.hypot(*(keep[0] - keep[-1])) <= tol:
        keep.pop()
    pts = np.array(keep).reshape(-1, 2)
    changed = True
    while changed and len(pts) >= 3:
        changed = False
        for i in range(len(pts)):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % len(pts)]
            if abs(_cross(b - a, c - b)) <= tol * max(np.hypot(*(c - a)), tol):
                pts = np.delete(pts, i, axis=0)
                changed = True
                break
    return pts


def erode(d: Domain, delta: float) -> Domain:
    """Inner parallel polygon at distance ``delta`` (exact for convex input)."""
    if delta <= 0:
        raise GeometryError("erosion depth must be positive")
    r = inradius(d)
    if delta >= r * (1 - 1e-12):
        raise EmptyErosion(f"depth {delta} is not below the inradius {r:.6g}")
    poly = d.points.copy()
    for n, c in zip(d.normals, d.offsets):
        poly = _clip_halfplane(poly, n, c - delta)
    poly = _clean_polygon(poly, 1e-12 * max(float(np.abs(d.points).max()), 1.0))
    if len(poly) < 3:
        raise EmptyErosion(f"erosion by {delta} leaves no interior")
    return build_convex_polygon(poly)


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(p - proj).T)


def boundary_distance(outer: Domain, inner: Domain) -> float:
    """Distance between the two boundaries when ``inner`` is compactly inside."""
    if not np.all(contains(outer, inner.points)):
        raise NotNested("inner polygon is not compactly contained in outer")
    best = np.inf
    for a, b in outer.edges:
        best = min(best, float(_point_segment_distance(inner.points, a, b).min()))
    for a, b in inner.edges:
        best = min(best, float(_point_segment_distance(outer.points, a, b).min()))
    return best


def chord_lengths(d: Domain, direction, s) -> np.ndarray:
    """Length of ``{x in Omega : <x, e> = s}`` for unit ``e``, vectorized in s."""
    e = np.asarray(direction, dtype=float)
    e = e / np.hypot(*e)
    perp = np.array([-e[1], e[0]])
    s = np.asarray(s, dtype=float)
    # parametrize the line as s*e + r*perp; intersect the half-planes in r
    ne = d.normals @ e
    np_ = d.normals @ perp
    rhs = d.offsets[None, :] - s[..., None] * ne[None, :]
    lo = np.full(s.shape, -np.inf)
    hi = np.full(s.shape, np.inf)
    for k in range(len(ne)):
        if abs(np_[k]) < 1e-15:
            bad = rhs[..., k] < 0
            hi = np.where(bad, -np.inf, hi)
            continue
        bound = rhs[..., k] / np_[k]
        if np_[k] > 0:
            hi = np.minimum(hi, bound)
        else:
            lo = np.maximum(lo, bound)
    return np.maximum(hi - lo, 0.0)


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell grid; cell ``(i, j)`` has centre ``origin + (i+.5, j+.5) h``.

    Arrays on the grid are indexed ``[i, j]`` with ``i`` along x.
    """

    h: float
    origin: tuple[float, float]
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.h > 0 and np.isfinite(self.h)):
            raise GeometryError("grid spacing must be positive")
        if self.nx < 1 or self.ny < 1:
            raise GeometryError("grid must have at least one cell per axis")

    @classmethod
    def covering(cls, d: Domain, h: float, margin: int = GRID_MARGIN) -> "GridSpec":
        """Smallest grid aligned to multiples of ``h`` with ``margin`` spare cells."""
        x0, y0, x1, y1 = d.bounds
        i0 = int(np.floor(x0 / h + 1e-9)) - margin
        j0 = int(np.floor(y0 / h + 1e-9)) - margin
        i1 = int(np.ceil(x1 / h - 1e-9)) + margin
        j1 = int(np.ceil(y1 / h - 1e-9)) + margin
        return cls(h, (i0 * h, j0 * h), i1 - i0, j1 - j0)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        ox, oy = self.origin
        return (ox, oy, ox + self.nx * self.h, oy + self.ny * self.h)

    @cached_property
    def xs(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.h

    @cached_property
    def ys(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.h

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centres, shape ``(nx, ny, 2)``."""
        gx, gy = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.stack([gx, gy], axis=-1)

    def to_physical(self, idx: np.ndarray) -> np.ndarray:
        """Fractional cell indices ``(i, j)`` to coordinates."""
        idx = np.asarray(idx, dtype=float)
        return np.asarray(self.origin) + (idx + 0.5) * self.h


@dataclass(frozen=True, eq=False)
class RegionMask:
    grid: GridSpec
    inside: np.ndarray

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.inside))

    @property
    def area(self) -> float:
        return self.count * self.grid.h ** 2

    def centers(self) -> np.ndarray:
        return self.grid.centers[self.inside]


def rasterize(d: Domain, g: GridSpec) -> RegionMask:
    """Cells whose centres lie strictly inside ``d``."""
    x0, y0, x1, y1 = d.bounds
    gx0, gy0, gx1, gy1 = g.bounds
    pad = GRID_MARGIN * g.h * (1 - 1e-9)
    if x0 - gx0 < pad or y0 - gy0 < pad or gx1 - x1 < pad or gy1 - y1 < pad:
        raise GridTooSmall(
            f"grid {g.bounds} does not cover {d.bounds} with a {GRID_MARGIN}-cell margin")
    return RegionMask(g, np.asarray(contains(d, g.centers)))
