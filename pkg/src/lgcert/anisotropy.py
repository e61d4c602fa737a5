"""Metric integrands phi(x, xi), their polars and dual-ball projections.

Three families are supported, all with closed-form polars:

* ``euclidean``:  phi(x, xi) = |xi|
* ``weighted``:   phi(x, xi) = w(x) |xi| with a positive weight field
* ``axis_norm``:  phi(x, xi) = ||xi||_p for p in {1, 2, inf}

Evaluation functions broadcast over leading axes: points have shape
``(..., 2)`` and so do vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .geometry import Domain, boundary_points, contains_closed, rasterize, GridSpec


class AnisotropyError(ValueError):
    pass


class OutsideDomain(AnisotropyError):
    pass


class UnsupportedFamily(AnisotropyError):
    pass


FAMILIES = ("euclidean", "weighted", "axis_norm")

WeightField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class MetricIntegrand:
    """An anisotropy together with its declared ellipticity constants.

    ``polar_of`` is set on integrands produced by :func:`polar`; the
    evaluation rule of a polar is again one of the three families, so the
    same code evaluates both.
    """

    family: str
    lam: float = 1.0
    Lam: float = 1.0
    weight: Optional[WeightField] = None
    p: Optional[float] = None
    domain: Optional[Domain] = None
    name: str = ""
    params: dict = field(default_factory=dict)
    polar_of: Optional["MetricIntegrand"] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UnsupportedFamily(f"unknown integrand family {self.family!r}")
        if not (0 < self.lam <= self.Lam):
            raise AnisotropyError("need 0 < lambda <= Lambda")
        if self.family == "weighted" and self.weight is None:
            raise AnisotropyError("weighted integrand needs a weight field")
        if self.family == "axis_norm" and self.p not in (1.0, 2.0, np.inf):
            raise UnsupportedFamily(f"axis norm exponent {self.p} not in {{1, 2, inf}}")

    @property
    def is_polar(self) -> bool:
        return self.polar_of is not None

    @property
    def is_isotropic(self) -> bool:
        """Euclidean up to a constant factor (the l2 axis norm included)."""
        if self.family == "euclidean":
            return True
        if self.family == "axis_norm":
            return self.p == 2.0
        return self.is_constant_weight

    @property
    def is_constant_weight(self) -> bool:
        return self.family == "weighted" and "constant" in self.params

    @property
    def is_translation_invariant(self) -> bool:
        return self.family in ("euclidean", "axis_norm") or self.is_constant_weight

    def weights(self, points) -> np.ndarray:
        """Scalar weight at ``points`` (ones for unweighted families)."""
        pts = np.asarray(points, dtype=float)
        if self.family != "weighted":
            return np.ones(pts.shape[:-1])
        if self.domain is not None and not np.all(contains_closed(self.domain, pts)):
            raise OutsideDomain("weight field evaluated outside its domain")
        return np.broadcast_to(np.asarray(self.weight(pts), dtype=float), pts.shape[:-1])

    def describe(self) -> dict:
        out = {"family": self.family, "lambda": self.lam, "Lambda": self.Lam}
        if self.family == "axis_norm":
            out["p"] = "inf" if self.p == np.inf else self.p
        if self.name:
            out["weight"] = self.name
        out.update(self.params)
        if self.is_polar:
            out["polar"] = True
        return out


def euclidean() -> MetricIntegrand:
    return MetricIntegrand("euclidean", 1.0, 1.0, name="")


def constant_weight(c: float) -> MetricIntegrand:
    if c <= 0:
        raise AnisotropyError("weight must be positive")
    c = float(c)
    return MetricIntegrand("weighted", c, c,
                           weight=lambda pts, c=c: np.full(np.shape(pts)[:-1], c),
                           name="constant", params={"constant": c})


def quadratic_weight_field(pts: np.ndarray) -> np.ndarray:
    return 1.0 + pts[..., 0] ** 2 / 4.0


def quadratic_weight(domain: Domain) -> MetricIntegrand:
    """``w(x, y) = 1 + x^2/4`` with exact bounds over ``domain``."""
    x0, _, x1, _ = domain.bounds
    lo = 0.0 if x0 <= 0.0 <= x1 else min(abs(x0), abs(x1))
    hi = max(abs(x0), abs(x1))
    return MetricIntegrand("weighted", 1 + lo ** 2 / 4, 1 + hi ** 2 / 4,
                           weight=quadratic_weight_field, domain=domain,
                           name="quadratic")


def weighted(weight: WeightField, lam: float, Lam: float,
             domain: Optional[Domain] = None, name: str = "custom") -> MetricIntegrand:
    return MetricIntegrand("weighted", lam, Lam, weight=weight, domain=domain, name=name)


def axis_norm(p: float) -> MetricIntegrand:
    p = float(p)
    bounds = {1.0: (1.0, np.sqrt(2.0)), 2.0: (1.0, 1.0), np.inf: (1 / np.sqrt(2.0), 1.0)}
    if p not in bounds:
        raise UnsupportedFamily(f"axis norm exponent {p} not in {{1, 2, inf}}")
    lam, Lam = bounds[p]
    return MetricIntegrand("axis_norm", lam, Lam, p=p)


def _norm(v: np.ndarray, p: float) -> np.ndarray:
    if p == 1.0:
        return np.abs(v[..., 0]) + np.abs(v[..., 1])
    if p == np.inf:
        return np.maximum(np.abs(v[..., 0]), np.abs(v[..., 1]))
    return np.hypot(v[..., 0], v[..., 1])


def evaluate(phi: MetricIntegrand, x, xi):
    """phi(x, xi); scalar in, scalar out."""
    xi = np.asarray(xi, dtype=float)
    scalar = xi.ndim == 1 and np.ndim(x) == 1
    if phi.family == "axis_norm":
        val = _norm(xi, phi.p)
    else:
        val = np.hypot(xi[..., 0], xi[..., 1])
        if phi.family == "weighted":
            val = phi.weights(x) * val
    return float(val) if scalar else val


def _dual_exponent(p: float) -> float:
    return {1.0: np.inf, 2.0: 2.0, np.inf: 1.0}[p]


def polar(phi: MetricIntegrand) -> MetricIntegrand:
    """Closed-form polar phi0(x, z) = sup{<z, xi> : phi(x, xi) <= 1}."""
    if phi.polar_of is not None:
        return phi.polar_of
    lam, Lam = 1.0 / phi.Lam, 1.0 / phi.lam
    if phi.family == "euclidean":
        return replace(phi, polar_of=phi)
    if phi.family == "weighted":
        w = phi.weight
        params = {"constant": 1.0 / phi.params["constant"]} if phi.is_constant_weight else {}
        return replace(phi, lam=lam, Lam=Lam, weight=lambda pts, w=w: 1.0 / w(pts),
                       name=f"1/{phi.name}", params=params, polar_of=phi)
    if phi.family == "axis_norm":
        return replace(phi, lam=lam, Lam=Lam, p=_dual_exponent(phi.p), polar_of=phi)
    raise UnsupportedFamily(phi.family)


def _project_l1_ball(z: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection of 2-vectors onto the l1 ball (soft threshold)."""
    a = np.abs(z)
    hi = np.maximum(a[..., 0], a[..., 1])
    lo = np.minimum(a[..., 0], a[..., 1])
    # threshold keeping both coordinates, else keeping only the larger one
    theta = np.where(hi - lo < radius, (hi + lo - radius) / 2.0, hi - radius)
    theta = np.where(hi + lo <= radius, 0.0, theta)
    return np.sign(z) * np.maximum(a - theta[..., None], 0.0)


def _project_unit_ball(psi: MetricIntegrand, x, z: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {z : psi(x, z) <= 1}."""
    if psi.family == "axis_norm":
        if psi.p == np.inf:
            return np.clip(z, -1.0, 1.0)
        if psi.p == 1.0:
            return _project_l1_ball(z)
        radius = np.ones(z.shape[:-1])
    elif psi.family == "euclidean":
        radius = np.ones(z.shape[:-1])
    elif psi.family == "weighted":
        radius = 1.0 / psi.weights(x)
    else:
        raise UnsupportedFamily(psi.family)
    nz = np.hypot(z[..., 0], z[..., 1])
    scale = radius / np.maximum(nz, radius)
    return z * scale[..., None]


def project_polar_ball(phi: MetricIntegrand, x, z):
    """Project ``z`` onto the dual constraint set phi0(x, z) <= 1."""
    z = np.asarray(z, dtype=float)
    return _project_unit_ball(polar(phi), x, z)


@dataclass(frozen=True, eq=False)
class FieldIntegrand:
    """An integrand frozen onto a fixed array of sample points.

    Used by iterative solvers so that weights are evaluated once.
    """

    phi: MetricIntegrand
    w: np.ndarray

    def value(self, g: np.ndarray) -> np.ndarray:
        if self.phi.family == "axis_norm":
            return _norm(g, self.phi.p)
        return self.w * np.hypot(g[..., 0], g[..., 1])

    def polar_value(self, z: np.ndarray) -> np.ndarray:
        if self.phi.family == "axis_norm":
            return _norm(z, _dual_exponent(self.phi.p))
        return np.hypot(z[..., 0], z[..., 1]) / self.w

    def project(self, z: np.ndarray) -> np.ndarray:
        if self.phi.family == "axis_norm":
            if self.phi.p == 1.0:
                return np.clip(z, -1.0, 1.0)
            if self.phi.p == np.inf:
                return _project_l1_ball(z)
        nz = np.hypot(z[..., 0], z[..., 1])
        scale = np.minimum(1.0, self.w / np.maximum(nz, 1e-300))
        return z * scale[..., None]


def prepare(phi: MetricIntegrand, points) -> FieldIntegrand:
    if phi.is_polar:
        raise UnsupportedFamily("prepare expects a primal integrand")
    return FieldIntegrand(phi, np.asarray(phi.weights(points), dtype=float))


def _sample_points(d: Domain, samples: int) -> np.ndarray:
    s = np.linspace(0.0, d.total_arc_length, max(samples, 1), endpoint=False)
    bpts, _, _ = boundary_points(d, s)
    x0, y0, x1, y1 = d.bounds
    m = max(int(np.sqrt(samples)), 4)
    h = max(x1 - x0, y1 - y0) / m
    grid = GridSpec.covering(d, h)
    inner = rasterize(d, grid).centers()
    return np.concatenate([d.points, bpts, inner], axis=0)


def unit_directions(samples: int) -> np.ndarray:
    """Directions on the half circle, always including axes and diagonals."""
    m = 8 * int(np.ceil(max(samples, 1) / 8))
    ang = np.arange(m) * np.pi / m
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def ellipticity_bounds(phi: MetricIntegrand, d: Domain, samples: int = 64) -> tuple[float, float]:
    """Empirical min and max of phi(x, xi) over x in the closed domain, |xi| = 1."""
    if samples < 1:
        raise AnisotropyError("samples must be positive")
    pts = _sample_points(d, samples)
    dirs = unit_directions(samples)
    vals = evaluate(phi, pts[:, None, :], dirs[None, :, :])
    return float(vals.min()), float(vals.max())


def bipolar_residual(phi: MetricIntegrand, samples: int = 100, angles: int = 3600,
                     domain: Optional[Domain] = None, seed: int = 0) -> float:
    """Gap between phi and the numerically computed bipolar phi00.

    The supremum defining phi00(x, xi) is taken over ``angles`` boundary
    points of the polar unit ball.
    """
    rng = np.random.default_rng(seed)
    dom = domain if domain is not None else phi.domain
    if dom is not None:
        x0, y0, x1, y1 = dom.bounds
        pts = []
        while len(pts) < samples:
            cand = rng.uniform((x0, y0), (x1, y1), size=(4 * samples, 2))
            pts.extend(cand[contains_closed(dom, cand)])
        pts = np.array(pts[:samples])
    else:
        pts = rng.uniform(0.0, 1.0, size=(samples, 2))
    th = rng.uniform(0.0, 2 * np.pi, size=samples)
    xi = np.stack([np.cos(th), np.sin(th)], axis=1)

    psi = polar(phi)
    grid = 2 * np.pi * np.arange(angles) / angles
    u = np.stack([np.cos(grid), np.sin(grid)], axis=1)
    radius = 1.0 / evaluate(psi, pts[:, None, :], u[None, :, :])
    ball = u[None, :, :] * radius[..., None]
    sup = np.einsum("kaj,kj->ka", ball, xi).max(axis=1)
    return float(np.abs(sup - evaluate(phi, pts, xi)).max())
