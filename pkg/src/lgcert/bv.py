"""Discrete BV calculus on rasterized polygonal domains.

Grid functions live on cell centres.  Superlevel sets ``{u >= t}`` are
represented twice: as the set of cells (for measures) and as
marching-squares contours clipped to the polygon (for perimeters).  Trace
quantities are always computed from the prescribed boundary data, on a
fine arc partition that is geometrically graded towards declared singular
points of the data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import ndimage
from skimage.measure import find_contours

from .anisotropy import MetricIntegrand, euclidean, evaluate
from .geometry import Domain, GridSpec, RegionMask, nearest_boundary_point, project_to_closure

DEFAULT_ARC_SAMPLES = 2 ** 16
PLATEAU_DELTA = 1e-6


class BVError(ValueError):
    pass


class EmptyMask(BVError):
    pass


class Divergent(BVError):
    """The boundary integral grows without bound under refinement."""


class NegativeInput(BVError):
    pass


# --------------------------------------------------------------------------
# grid functions


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Values at the cell centres of ``mask``.

    ``collar`` optionally marks cells outside the domain that carry
    Dirichlet values (the extended trace).  Differences between an inside
    cell and a collar cell then enter the total variation, which is how the
    boundary term of the relaxed functional is discretized.  Other entries
    outside the mask are ignored.
    """

    domain: Domain
    mask: RegionMask
    values: np.ndarray
    collar: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.values.shape != self.mask.grid.shape:
            raise BVError(f"values of shape {self.values.shape} do not match grid "
                          f"{self.mask.grid.shape}")
        if not np.all(np.isfinite(self.values[self.mask.inside])):
            raise BVError("grid function has non-finite values inside the domain")
        if self.collar is not None:
            if self.collar.shape != self.values.shape:
                raise BVError("collar mask does not match the grid")
            if np.any(self.collar & self.mask.inside):
                raise BVError("collar cells must lie outside the domain mask")
            if not np.all(np.isfinite(self.values[self.collar])):
                raise BVError("grid function has non-finite collar values")

    @property
    def active(self) -> np.ndarray:
        if self.collar is None:
            return self.mask.inside
        return self.mask.inside | self.collar

    @property
    def grid(self) -> GridSpec:
        return self.mask.grid

    @property
    def h(self) -> float:
        return self.mask.grid.h

    def inside_values(self) -> np.ndarray:
        return self.values[self.mask.inside]

    def with_values(self, values: np.ndarray) -> "GridFunction":
        return GridFunction(self.domain, self.mask, values, self.collar)

    def without_collar(self) -> "GridFunction":
        return GridFunction(self.domain, self.mask, self.values)

    def positive_part(self) -> "GridFunction":
        return self.with_values(np.maximum(self.values, 0.0))

    def negative_part(self) -> "GridFunction":
        return self.with_values(np.maximum(-self.values, 0.0))

    def scaled(self, c: float) -> "GridFunction":
        return self.with_values(c * self.values)

    def l1_norm(self) -> float:
        return float(np.abs(self.inside_values()).sum() * self.h ** 2)


def grid_function(domain: Domain, mask: RegionMask, fn: Callable[[np.ndarray], np.ndarray]
                  ) -> GridFunction:
    """Sample ``fn(points)`` at the cell centres inside ``mask``."""
    vals = np.zeros(mask.grid.shape)
    vals[mask.inside] = fn(mask.centers())
    return GridFunction(domain, mask, vals)


def collar_mask(mask: RegionMask, width: int = 2) -> np.ndarray:
    """Cells outside ``mask`` within ``width`` steps (8-connected) of it."""
    grown = ndimage.binary_dilation(mask.inside, structure=np.ones((3, 3), bool),
                                    iterations=width)
    return grown & ~mask.inside


def with_trace(u: GridFunction, f: "BoundaryData", width: int = 2,
               cap: Optional[float] = None) -> GridFunction:
    """Attach a collar holding ``f`` at the nearest boundary point (capped at ``cap``)."""
    collar = collar_mask(u.mask, width)
    g = f if cap is None else f.capped(cap)
    vals = u.values.copy()
    vals[collar] = g.extension(u.grid.centers[collar])
    return GridFunction(u.domain, u.mask, vals, collar)


def l1_distance(u: GridFunction, v: GridFunction) -> float:
    if u.grid != v.grid:
        raise BVError("grid functions live on different grids")
    m = u.mask.inside & v.mask.inside
    return float(np.abs(u.values[m] - v.values[m]).sum() * u.h ** 2)


# --------------------------------------------------------------------------
# boundary data and arc quadrature


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Trace datum ``f`` on the boundary of ``domain``.

    ``func`` maps boundary points ``(..., 2)`` to values; evaluating by
    position (not arc length) keeps graded quadrature near singular
    vertices accurate.  ``singular`` lists arc parameters where ``f`` may
    blow up.  ``integrable_below`` records the exponent threshold p* with
    f in L^p exactly for p < p*, when known.
    """

    domain: Domain
    func: Callable[[np.ndarray], np.ndarray]
    singular: tuple[float, ...] = ()
    integrable_below: float = math.inf
    description: dict = field(default_factory=dict)
    profile: Optional[tuple[tuple[float, float], Callable]] = None

    def at_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=float)
        return np.broadcast_to(np.asarray(self.func(pts), dtype=float), pts.shape[:-1])

    def __call__(self, s) -> np.ndarray:
        from .geometry import boundary_points

        pos, _, _ = boundary_points(self.domain, s)
        return self.at_points(pos)

    def _mapped(self, op: Callable[[np.ndarray], np.ndarray], tag: dict,
                keep_profile: bool = True, integrable=None) -> "BoundaryData":
        f = self.func
        prof = None
        if keep_profile and self.profile is not None:
            e, g = self.profile
            prof = (e, lambda s, g=g: op(g(s)))
        return BoundaryData(self.domain, lambda pts: op(f(pts)), self.singular,
                            self.integrable_below if integrable is None else integrable,
                            {**self.description, **tag}, prof)

    def positive_part(self) -> "BoundaryData":
        return self._mapped(lambda v: np.maximum(v, 0.0), {"part": "+"})

    def negative_part(self) -> "BoundaryData":
        return self._mapped(lambda v: np.maximum(-v, 0.0), {"part": "-"})

    def capped(self, cap: float) -> "BoundaryData":
        return self._mapped(lambda v: np.clip(v, -cap, cap), {"cap": cap},
                            integrable=math.inf)

    def scaled(self, c: float) -> "BoundaryData":
        return self._mapped(lambda v: c * v, {"scale": c})

    def extension(self, pts) -> np.ndarray:
        """Value at the nearest boundary point (used on the collar)."""
        near, _ = nearest_boundary_point(self.domain, pts)
        return self.at_points(near)


def _graph_data(domain: Domain, direction, g: Callable, description: dict,
                singular=(), integrable_below=math.inf) -> BoundaryData:
    e = np.asarray(direction, dtype=float)
    e = e / np.hypot(*e)
    return BoundaryData(domain, lambda pts: g(np.asarray(pts)[..., :] @ e), tuple(singular),
                        integrable_below, description, ((float(e[0]), float(e[1])), g))


def constant_data(domain: Domain, c: float) -> BoundaryData:
    c = float(c)
    return _graph_data(domain, (1.0, 0.0), lambda s: np.full(np.shape(s), c),
                       {"family": "constant", "value": c})


def step_data(domain: Domain, direction=(1.0, 0.0), threshold: Optional[float] = None,
              low: float = 0.0, high: float = 1.0) -> BoundaryData:
    """``high`` where <x, e> >= threshold, ``low`` elsewhere (default: mid-range)."""
    e = np.asarray(direction, dtype=float)
    e = e / np.hypot(*e)
    proj = domain.points @ e
    thr = 0.5 * (proj.min() + proj.max()) if threshold is None else float(threshold)
    return _graph_data(domain, e, lambda s: np.where(s >= thr, high, low),
                       {"family": "step", "direction": [float(e[0]), float(e[1])],
                        "threshold": float(thr), "low": float(low), "high": float(high)})


def g_n_profile(n: int, s0: float = 0.0) -> Callable:
    expo = -1.0 + 1.0 / n

    def g(s):
        r = np.asarray(s, dtype=float) - s0
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, np.abs(r) ** expo, np.inf)

    return g


def g_n_data(domain: Domain, n: int, direction=(1.0, 0.0)) -> BoundaryData:
    """f(x) = (<x, e> - s0)^(-1 + 1/n), singular at the vertex minimizing <x, e>."""
    if n < 2:
        raise BVError("g_n needs n >= 2")
    e = np.asarray(direction, dtype=float)
    e = e / np.hypot(*e)
    proj = domain.points @ e
    s0 = float(proj.min())
    tips = np.flatnonzero(proj <= s0 + 1e-12)
    if len(tips) != 1:
        raise BVError("g_n data needs a unique vertex minimizing <x, e>")
    k = int(tips[0])
    # exact shift: the tip vertex maps to 0 without rounding
    tip = domain.points[k]
    g = g_n_profile(n, 0.0)
    return BoundaryData(
        domain, lambda pts: g((np.asarray(pts) - tip) @ e),
        (float(domain.cumulative_arc[k]),), n / (n - 1.0),
        {"family": "g_n", "n": int(n), "direction": [float(e[0]), float(e[1])]},
        ((float(e[0]), float(e[1])), g_n_profile(n, s0)))


def piecewise_linear_data(domain: Domain, knots: Sequence[Sequence[float]]) -> BoundaryData:
    """Periodic piecewise-linear interpolation of ``(s, value)`` knots."""
    k = np.asarray(knots, dtype=float)
    if k.ndim != 2 or k.shape[1] != 2 or len(k) < 1:
        raise BVError("knots must be a list of (s, value) pairs")
    k = k[np.argsort(k[:, 0])]
    L = domain.total_arc_length
    xs = np.concatenate([k[:, 0] - L, k[:, 0], k[:, 0] + L])
    vs = np.tile(k[:, 1], 3)

    def func(pts):
        _, s = nearest_boundary_point(domain, pts)
        return np.interp(s, xs, vs)

    return BoundaryData(domain, func, (), math.inf,
                        {"family": "piecewise_linear", "knots": k.tolist()})


@dataclass(frozen=True, eq=False)
class ArcCells:
    """Midpoint-rule cells of a boundary partition."""

    points: np.ndarray
    lengths: np.ndarray
    arc: np.ndarray
    normals: np.ndarray


_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(4)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W


def arc_cells(domain: Domain, n: int = DEFAULT_ARC_SAMPLES, singular: Sequence[float] = (),
              depth: int = 40) -> ArcCells:
    """Partition of the boundary into about ``n`` cells.

    The cells touching each singular point are split geometrically
    (ratio 1/2, ``depth`` times) towards it and sampled at 4 Gauss nodes
    each; ``lengths`` are then quadrature weights.  Nodes are computed as
    offsets from the singular point itself so that very small offsets
    stay exact.
    """
    L = domain.total_arc_length
    pts, lens, arcs, nrms = [], [], [], []
    counted = 0
    sing = np.mod(np.asarray(singular, dtype=float), L)
    for k in range(len(domain.vertices)):
        a = domain.points[k]
        b = domain.points[(k + 1) % len(domain.vertices)]
        d = domain.directions[k]
        ell = domain.edge_lengths[k]
        s_k = domain.cumulative_arc[k]
        m = max(1, int(round(n * ell / L)))
        nodes = np.linspace(0.0, ell, m + 1)
        anchors = []
        for s in sing:
            tau = s - s_k
            if abs(s - s_k - ell) < 1e-12 * L or (k == len(domain.vertices) - 1 and s < 1e-12 * L):
                tau = ell
            if -1e-12 * L <= tau <= ell + 1e-12 * L:
                anchors.append(min(max(tau, 0.0), ell))
        nodes = np.unique(np.concatenate([nodes, anchors]))
        anchors = np.asarray(anchors)

        def anchor_point(tau):
            if tau == 0.0:
                return a
            if tau == ell:
                return b
            return a + tau * d

        lo, hi = nodes[:-1], nodes[1:]
        near_lo = np.isin(lo, anchors)
        near_hi = np.isin(hi, anchors)
        plain = ~(near_lo | near_hi)
        mid = 0.5 * (lo[plain] + hi[plain])
        pts.append(a + mid[:, None] * d)
        lens.append(hi[plain] - lo[plain])
        arcs.append(s_k + mid)
        for x0, x1, gl, gh in zip(lo[~plain], hi[~plain], near_lo[~plain], near_hi[~plain]):
            width = x1 - x0
            if gl and gh:
                pieces = [(x0, +1, 0.5 * width), (x1, -1, 0.5 * width)]
            elif gl:
                pieces = [(x0, +1, width)]
            else:
                pieces = [(x1, -1, width)]
            for anchor, sign, c in pieces:
                outer = c * 0.5 ** np.arange(depth + 1)
                inner = np.append(outer[1:], 0.0)
                width = outer - inner
                # Gauss nodes per dyadic cell: a midpoint on cells of ratio 2
                # keeps a fixed relative error under refinement
                offs = (inner[:, None] + width[:, None] * _GAUSS_X[None, :]).ravel()
                base = anchor_point(anchor)
                pts.append(base + (sign * offs)[:, None] * d)
                lens.append((width[:, None] * _GAUSS_W[None, :]).ravel())
                arcs.append(s_k + anchor + sign * offs)
        total = sum(len(x) for x in lens)
        nrms.append(np.repeat(domain.normals[k][None, :], total - counted, axis=0))
        counted = total
    return ArcCells(np.concatenate(pts), np.concatenate(lens),
                    np.mod(np.concatenate(arcs), L), np.concatenate(nrms))


def _cells_for(f: BoundaryData, n: int, depth: int = 40) -> ArcCells:
    return arc_cells(f.domain, n, f.singular, depth)


def boundary_values(f: BoundaryData, n: int = DEFAULT_ARC_SAMPLES) -> tuple[np.ndarray, ArcCells]:
    cells = _cells_for(f, n)
    return f.at_points(cells.points), cells


def trace_level_measure(f: BoundaryData, t: float, n: int = DEFAULT_ARC_SAMPLES) -> float:
    """Arc-length measure of ``{f >= t}``."""
    vals, cells = boundary_values(f, n)
    return float(cells.lengths[vals >= t].sum())


def is_plateau_level(f: BoundaryData, t: float, n: int = DEFAULT_ARC_SAMPLES,
                     delta: float = PLATEAU_DELTA) -> bool:
    """True when ``{f = t}`` carries positive boundary measure."""
    vals, cells = boundary_values(f, n)
    near = cells.lengths[np.abs(vals - t) <= delta].sum()
    return bool(near > 10 * delta * f.domain.total_arc_length)


def boundary_integral(f: BoundaryData, weight: Optional[Callable] = None,
                      n: int = DEFAULT_ARC_SAMPLES, power: float = 1.0) -> float:
    """Midpoint value of ``int weight(x, nu) |f|^power dH1``."""
    vals, cells = boundary_values(f, n)
    integrand = np.abs(vals) ** power
    if weight is not None:
        integrand = integrand * weight(cells.points, cells.normals)
    return float((integrand * cells.lengths).sum())


def boundary_lp_norm(f: BoundaryData, p: float, n0: int = 2 ** 12, max_levels: int = 7,
                     rtol: float = 1e-4, depth0: int = 40, depth_step: int = 30) -> float:
    """L^p norm of ``f`` over the boundary with divergence detection.

    Each refinement doubles the uniform cell count and deepens the graded
    cells by ``depth_step`` halvings.  Three consecutive increases above
    10 % (or a non-finite partial sum) raise :class:`Divergent`.
    """
    if p < 1:
        raise BVError("p must be at least 1")
    prev = None
    streak = 0
    for level in range(max_levels):
        cells = _cells_for(f, n0 * 2 ** level, depth0 + depth_step * level)
        vals = np.abs(f.at_points(cells.points))
        with np.errstate(over="ignore"):
            total = float((vals ** p * cells.lengths).sum())
        if not math.isfinite(total):
            raise Divergent(f"|f|^{p} is not integrable (non-finite partial sum)")
        norm = total ** (1.0 / p)
        if prev is not None:
            growth = norm / prev - 1.0 if prev > 0 else (math.inf if norm > 0 else 0.0)
            streak = streak + 1 if growth > 0.10 else 0
            if streak >= 3:
                raise Divergent(f"partial L^{p} norms keep growing (last ratio {1 + growth:.3g})")
            if abs(growth) < rtol:
                return norm
        prev = norm
    return prev


def chebyshev_majorant(f: BoundaryData, p: float, t: float, N: int = 2) -> float:
    """Weak-L^p bound on ``H^{N-1}({f_+ >= t})^(1/(N-1))``."""
    if t <= 0:
        raise BVError("level must be positive")
    norm = boundary_lp_norm(f.positive_part(), p)
    return norm ** (p / (N - 1)) / t ** (p / (N - 1))


# --------------------------------------------------------------------------
# superlevel sets and perimeters


@dataclass(frozen=True, eq=False)
class LevelSet:
    t: float
    region: RegionMask
    contour: list[np.ndarray]
    domain: Domain

    @property
    def segments(self) -> tuple[np.ndarray, np.ndarray]:
        if not self.contour:
            return np.zeros((0, 2)), np.zeros((0, 2))
        a = np.concatenate([c[:-1] for c in self.contour])
        b = np.concatenate([c[1:] for c in self.contour])
        return a, b


def _extend_outside(u: GridFunction) -> np.ndarray:
    inside = u.mask.inside
    if not inside.any():
        raise EmptyMask("grid function has no cells inside the domain")
    _, idx = ndimage.distance_transform_edt(~inside, return_indices=True)
    return u.values[idx[0], idx[1]]


def _clip_polyline(poly: np.ndarray, d: Domain) -> list[np.ndarray]:
    """Cyrus-Beck clipping of every segment against the convex polygon."""
    if len(poly) < 2:
        return []
    p0, p1 = poly[:-1], poly[1:]
    dv = p1 - p0
    t0 = np.zeros(len(p0))
    t1 = np.ones(len(p0))
    for nrm, c in zip(d.normals, d.offsets):
        num = c - p0 @ nrm
        den = dv @ nrm
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num / den
        entering = den < 0
        leaving = den > 0
        t0 = np.where(entering, np.maximum(t0, t), t0)
        t1 = np.where(leaving, np.minimum(t1, t), t1)
        outside = (den == 0) & (num < 0)
        t1 = np.where(outside, -1.0, t1)
    keep = t1 > t0 + 1e-12
    out: list[np.ndarray] = []
    current: list[np.ndarray] = []
    for k in range(len(p0)):
        if not keep[k]:
            if len(current) > 1:
                out.append(np.array(current))
            current = []
            continue
        a = p0[k] + t0[k] * dv[k]
        b = p0[k] + t1[k] * dv[k]
        if current and (t0[k] > 1e-12 or not np.allclose(current[-1], a)):
            if len(current) > 1:
                out.append(np.array(current))
            current = []
        if not current:
            current = [a]
        current.append(b)
        if t1[k] < 1 - 1e-12:
            out.append(np.array(current))
            current = []
    if len(current) > 1:
        out.append(np.array(current))
    return out


def superlevel_set(u: GridFunction, t: float, _ext: Optional[np.ndarray] = None) -> LevelSet:
    """Cells with ``u >= t`` and the interface of that set inside the domain."""
    if not math.isfinite(t):
        raise BVError("level must be finite")
    inside = u.mask.inside
    region = RegionMask(u.grid, inside & (u.values >= t))
    contour: list[np.ndarray] = []
    if region.count not in (0, u.mask.count):
        ext = _extend_outside(u) if _ext is None else _ext
        # shifting the level by a rounding-size amount puts cells with
        # u == t on the closed side of the interface
        level = t - 1e-12 * max(1.0, abs(t))
        for line in find_contours(ext, level):
            phys = u.grid.to_physical(line)
            contour.extend(_clip_polyline(phys, u.domain))
    return LevelSet(float(t), region, contour, u.domain)


def region_measure(ls: LevelSet) -> float:
    return ls.region.area


def perimeter(ls: LevelSet, d: Optional[Domain] = None,
              phi: Optional[MetricIntegrand] = None) -> float:
    """Sum of phi(midpoint, unit normal) * length over the contour segments."""
    a, b = ls.segments
    if len(a) == 0:
        return 0.0
    seg = b - a
    length = np.hypot(seg[:, 0], seg[:, 1])
    ok = length > 0
    if phi is None or phi.family == "euclidean":
        return float(length.sum())
    seg, length, mid = seg[ok], length[ok], 0.5 * (a[ok] + b[ok])
    normal = np.stack([seg[:, 1], -seg[:, 0]], axis=1) / length[:, None]
    return float((evaluate(phi, mid, normal) * length).sum())


def glued_perimeter(ls: LevelSet, f: BoundaryData, d: Optional[Domain] = None,
                    n: int = DEFAULT_ARC_SAMPLES) -> float:
    """Perimeter in the plane of E_t extended by zero: interior part plus trace part."""
    return perimeter(ls) + trace_level_measure(f, ls.t, n)


def unit_ball_volume(N: int) -> float:
    return math.pi ** (N / 2) / math.gamma(N / 2 + 1)


def isoperimetric_constant(N: int) -> float:
    """Sharp C_N with |E|^((N-1)/N) <= C_N P(E)."""
    return 1.0 / (N * unit_ball_volume(N) ** (1.0 / N))


def isoperimetric_deficit(area: float, glued: float, N: int = 2) -> float:
    if area < 0 or glued < 0:
        raise NegativeInput("area and perimeter must be nonnegative")
    return isoperimetric_constant(N) * glued - area ** ((N - 1) / N)


# --------------------------------------------------------------------------
# total variation, coarea, layer cake


def pair_masks(inside: np.ndarray, active: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward pairs (x and y) whose cells are both active and not both outside."""
    px = np.zeros_like(inside)
    py = np.zeros_like(inside)
    px[:-1, :] = active[:-1, :] & active[1:, :] & (inside[:-1, :] | inside[1:, :])
    py[:, :-1] = active[:, :-1] & active[:, 1:] & (inside[:, :-1] | inside[:, 1:])
    return px, py


def forward_gradient(u: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Forward differences; components with a missing neighbour are dropped."""
    v, h = u.values, u.h
    px, py = pair_masks(u.mask.inside, u.active)
    gx = np.zeros_like(v)
    gy = np.zeros_like(v)
    gx[:-1, :] = np.where(px[:-1, :], (v[1:, :] - v[:-1, :]) / h, 0.0)
    gy[:, :-1] = np.where(py[:, :-1], (v[:, 1:] - v[:, :-1]) / h, 0.0)
    return gx, gy


def phi_total_variation(u: GridFunction, phi: Optional[MetricIntegrand] = None) -> float:
    """Sum of phi(x, grad_h u) h^2 over cells owning at least one forward pair.

    Without a collar this is the total variation inside the domain.  With a
    collar it also charges the jump to the boundary datum, i.e. it is the
    discrete relaxed Dirichlet functional.  Collar cells use the nearest
    point of the closed domain as their position.
    """
    if u.mask.count == 0:
        raise EmptyMask("grid function has no cells inside the domain")
    gx, gy = forward_gradient(u)
    px, py = pair_masks(u.mask.inside, u.active)
    own = px | py
    g = np.stack([gx[own], gy[own]], axis=-1)
    if phi is None:
        phi = euclidean()
    pts = u.grid.centers[own]
    if u.collar is not None and phi.family == "weighted":
        pts = project_to_closure(u.domain, pts)
    dens = evaluate(phi, pts, g)
    return float(dens.sum() * u.h ** 2)


def level_grid(vmin: float, vmax: float, levels: int) -> np.ndarray:
    """Level nodes over [vmin, vmax]; geometric when positive values span > 2 decades."""
    if vmin > 0 and vmax / vmin > 100.0:
        return np.geomspace(vmin, vmax, levels + 1)
    return np.linspace(vmin, vmax, levels + 1)


def interior_trace(u: GridFunction, pts) -> np.ndarray:
    """Value of the inside cell nearest to each point (the discrete trace)."""
    pts = np.asarray(pts, dtype=float)
    g = u.grid
    idx = np.floor((pts - np.asarray(g.origin)) / g.h).astype(int)
    idx[..., 0] = np.clip(idx[..., 0], 0, g.nx - 1)
    idx[..., 1] = np.clip(idx[..., 1], 0, g.ny - 1)
    _, near = ndimage.distance_transform_edt(~u.mask.inside, return_indices=True)
    i = near[0][idx[..., 0], idx[..., 1]]
    j = near[1][idx[..., 0], idx[..., 1]]
    return u.values[i, j]


def boundary_jump(u: GridFunction, f: BoundaryData, cap: Optional[float] = None,
                  n: int = 2 ** 14) -> float:
    """Integral over the boundary of |f - tr u|, with f capped at ``cap``."""
    g = f if cap is None else f.capped(cap)
    cells = _cells_for(g, n)
    vals = g.at_points(cells.points)
    tr = interior_trace(u, cells.points)
    return float((np.abs(vals - tr) * cells.lengths).sum())


def coarea_residual(u: GridFunction, levels: int = 400, f: Optional[BoundaryData] = None,
                    cap: Optional[float] = None) -> float:
    """Relative gap between TV(u) and the level integral of perimeters.

    Without boundary data this compares TV(u) inside the domain with the
    integral of P(E_t, Omega).  With boundary data ``f`` the function is
    extended by ``f`` through a collar; its variation then also carries the
    boundary jump, which is added to the level integral as int |f - tr u|.
    The collar variant is the consistent one near the boundary, where the
    plain version misses the strip between the outer cell centres and the
    polygon.
    """
    if levels < 16:
        raise BVError("coarea quadrature needs at least 16 levels")
    u = u.without_collar()
    vals = u.inside_values()
    lo, hi = float(vals.min()), float(vals.max())
    if f is None:
        tv = phi_total_variation(u)
        extra = 0.0
    else:
        tv = phi_total_variation(with_trace(u, f, cap=cap))
        extra = boundary_jump(u, f, cap)
    if tv == 0:
        return 0.0
    total = extra
    if hi > lo:
        nodes = level_grid(lo, hi, levels)
        mids = 0.5 * (nodes[:-1] + nodes[1:])
        ext = _extend_outside(u)
        total += sum(perimeter(superlevel_set(u, t, ext)) * dt
                     for t, dt in zip(mids, np.diff(nodes)))
    return abs(tv - total) / max(tv, 1e-300)


def direct_norm(u: GridFunction, q: float) -> float:
    vals = np.maximum(u.inside_values(), 0.0)
    return float((vals ** q).sum() * u.h ** 2) ** (1.0 / q)


def layer_cake_norm(u: GridFunction, q: float, levels: int = 400) -> float:
    """(q int_0^inf t^(q-1) |{u >= t}| dt)^(1/q) on a level grid.

    Each level interval [a, b] is weighted by the exact integral
    b^q - a^q and the measure is sampled at its midpoint.  Values spanning
    more than two decades add ``levels`` geometric nodes to the uniform ones.
    """
    if q < 1:
        raise BVError("q must be at least 1")
    vals = np.sort(np.maximum(u.inside_values(), 0.0))
    vmax = float(vals[-1]) if len(vals) else 0.0
    if vmax <= 0:
        return 0.0
    positive = vals[vals > 0]
    vmin = float(positive[0])
    nodes = np.linspace(0.0, vmax, levels + 1)
    if vmax / vmin > 100.0:
        # geometric nodes resolve blow-up profiles; the uniform ones keep
        # accuracy when the mass sits near the top of a wide range
        nodes = np.union1d(nodes, np.geomspace(vmin, vmax, levels))
    mids = 0.5 * (nodes[:-1] + nodes[1:])
    # |{u >= t}| via a sorted search; identical to counting the region cells
    counts = len(vals) - np.searchsorted(vals, mids, side="left")
    measure = counts * u.h ** 2
    total = float((measure * np.diff(nodes ** q)).sum())
    return total ** (1.0 / q)


# --------------------------------------------------------------------------
# level sweep export

SWEEP_COLUMNS = ("t", "measure", "perimeter", "phi_perimeter", "trace_measure",
                 "glued_perimeter", "deficit")


def level_sweep(u: GridFunction, f: BoundaryData, phi: MetricIntegrand,
                levels: Sequence[float]) -> list[dict]:
    vals, cells = boundary_values(f)
    ext = _extend_outside(u)
    rows = []
    for t in levels:
        ls = superlevel_set(u, float(t), ext)
        area = region_measure(ls)
        per = perimeter(ls)
        trace = float(cells.lengths[vals >= t].sum())
        glued = per + trace
        rows.append({"t": float(t), "measure": area, "perimeter": per,
                     "phi_perimeter": perimeter(ls, None, phi), "trace_measure": trace,
                     "glued_perimeter": glued,
                     "deficit": isoperimetric_deficit(area, glued)})
    return rows


def format_float(x: float) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".12g")


def write_sweep_csv(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([format_float(r[c]) for c in SWEEP_COLUMNS])
