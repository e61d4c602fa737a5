"""Least gradient solvers: an exact chord oracle and a primal-dual scheme.

The primal-dual scheme minimizes the relaxed Dirichlet functional

    phi-TV(u; Omega) + int_{boundary} phi(x, nu) |Tu - f| dH^1

on a cell grid.  The boundary term is realized by clamping a collar of
cells outside the domain to the (capped) boundary values, so forward
differences between an inside cell and a collar cell charge the jump to
the datum.  Iterations follow the first-order primal-dual method

    z  <- proj_{phi0 <= 1}(z + sigma grad ubar)
    u  <- u + tau div z            (inside cells only)
    ubar <- 2 u_new - u_old
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numba import njit

from .anisotropy import MetricIntegrand, evaluate
from .bv import (BoundaryData, GridFunction, _cells_for, collar_mask, interior_trace,
                 pair_masks, phi_total_variation)
from .geometry import Domain, GridSpec, project_to_closure, rasterize

DEFAULT_CAP = 1e6
BURN_IN = 100
DIVERGENCE_RUN = 1000


class SolverError(ValueError):
    pass


class NonMonotone(SolverError):
    pass


class UnsupportedIntegrand(SolverError):
    pass


class StepSizeViolation(SolverError):
    pass


class Diverged(SolverError):
    pass


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    domain: Domain
    integrand: MetricIntegrand
    boundary: BoundaryData
    N: int = 2

    def __post_init__(self):
        if self.N != 2:
            raise SolverError("only planar problems are solved numerically")
        if self.boundary.domain is not self.domain and not self.boundary.domain.isclose(self.domain):
            raise SolverError("boundary data lives on a different domain")
        if self.integrand.is_polar:
            raise SolverError("the integrand must be a primal metric integrand")


@dataclass(frozen=True)
class SolverConfig:
    """Grid and iteration parameters.

    ``tau`` and ``sigma`` default to h/4, which gives tau*sigma*8/h^2 = 1/2.
    The iteration stops once the raw energy varies by at most
    ``tol * best_energy`` over the last ``window`` iterations.
    """

    h: float
    collar: int = 2
    tau: Optional[float] = None
    sigma: Optional[float] = None
    max_iter: int = 20000
    tol: float = 1e-6
    cap: float = DEFAULT_CAP
    window: int = 200
    init: str = "extension"

    def __post_init__(self):
        if not (self.h > 0 and math.isfinite(self.h)):
            raise SolverError("grid spacing h must be positive")
        if self.collar < 1:
            raise SolverError("collar width must be at least one cell")
        if not self.cap > 0:
            raise SolverError("value cap must be positive")
        if self.max_iter < 1 or self.window < 1:
            raise SolverError("iteration counts must be positive")
        if self.init not in ("extension", "zero"):
            raise SolverError(f"unknown initialization {self.init!r}")
        if self.step_product_bound() > 1.0 + 1e-12:
            raise StepSizeViolation(
                f"tau*sigma*8/h^2 = {self.step_product_bound():.6g} exceeds 1")
        if self.primal_step <= 0 or self.dual_step <= 0:
            raise StepSizeViolation("step sizes must be positive")

    @property
    def primal_step(self) -> float:
        return self.h / 4 if self.tau is None else float(self.tau)

    @property
    def dual_step(self) -> float:
        return self.h / 4 if self.sigma is None else float(self.sigma)

    def step_product_bound(self) -> float:
        return self.primal_step * self.dual_step * 8.0 / self.h ** 2


@dataclass(eq=False)
class Solution:
    """Output of the primal-dual scheme.

    ``u`` carries its collar.  ``energy_history`` is the discrete functional
    of the best iterate found so far (hence nonincreasing); the raw
    per-iterate values are kept in ``raw_energy``.
    """

    u: GridFunction
    z: np.ndarray
    energy_history: np.ndarray
    raw_energy: np.ndarray
    iterations: int
    converged: bool
    problem: DirichletProblem
    config: SolverConfig
    dual_max: float = field(default=0.0)


# --------------------------------------------------------------------------
# chord oracle


def _check_monotone(g: Callable, lo: float, hi: float, samples: int = 4097) -> None:
    s = np.linspace(lo, hi, samples)
    with np.errstate(all="ignore"):
        v = np.asarray(g(s), dtype=float)
    v = v[~np.isnan(v)]
    dv = np.diff(v)
    dv = dv[np.isfinite(dv)]
    if not (np.all(dv >= 0) or np.all(dv <= 0)):
        raise NonMonotone("profile is not monotone on the range of <x, e>")


def check_oracle_integrand(phi: MetricIntegrand) -> None:
    """Chords are phi-minimal only when phi does not depend on position."""
    if not (phi.is_isotropic or phi.is_constant_weight or phi.is_translation_invariant):
        raise UnsupportedIntegrand(
            "the chord oracle is only certified for position-independent integrands")


def chord_oracle(g: Callable, direction, d: Domain, grid: GridSpec, cap: float = DEFAULT_CAP,
                 integrand: Optional[MetricIntegrand] = None) -> GridFunction:
    """u(cell) = min(g(<centre, e>), cap): every level line is a chord orthogonal to e.

    Parameters
    ----------
    g : callable
        Monotone profile on the range of ``<x, e>`` over the domain.
    direction : array_like
        Unit vector e (normalized here).
    cap : float
        Values are clipped to ``[-cap, cap]``.
    integrand : MetricIntegrand, optional
        Checked to be position independent.
    """
    if not cap > 0:
        raise SolverError("cap must be positive")
    if integrand is not None:
        check_oracle_integrand(integrand)
    e = np.asarray(direction, dtype=float)
    e = e / np.hypot(*e)
    proj = d.points @ e
    _check_monotone(g, float(proj.min()), float(proj.max()))
    mask = rasterize(d, grid)
    vals = np.zeros(grid.shape)
    s = mask.centers() @ e
    with np.errstate(divide="ignore", invalid="ignore"):
        vals[mask.inside] = np.clip(np.asarray(g(s), dtype=float), -cap, cap)
    return GridFunction(d, mask, vals)


def oracle_for(problem: DirichletProblem, grid: GridSpec, cap: float = DEFAULT_CAP) -> GridFunction:
    """Chord oracle for graph-type boundary data f = g(<x, e>)."""
    if problem.boundary.profile is None:
        raise NonMonotone("boundary data is not of graph type")
    e, g = problem.boundary.profile
    return chord_oracle(g, e, problem.domain, grid, cap, problem.integrand)


# --------------------------------------------------------------------------
# energies


def energy(u: GridFunction, problem: DirichletProblem, cap: Optional[float] = None,
           n: int = 2 ** 14) -> float:
    """phi-TV inside plus the boundary penalty int phi(x, nu) |tr u - f| ds.

    The trace of u is read from the inside cell nearest to each boundary
    quadrature point; f is capped at ``cap`` when given.
    """
    if u.domain is not problem.domain and not u.domain.isclose(problem.domain):
        raise SolverError("grid function lives on a different domain")
    inner = u.without_collar()
    tv = phi_total_variation(inner, problem.integrand)
    f = problem.boundary if cap is None else problem.boundary.capped(cap)
    cells = _cells_for(f, n)
    fv = f.at_points(cells.points)
    tr = interior_trace(inner, cells.points)
    weight = evaluate(problem.integrand, cells.points, cells.normals)
    return float(tv + (weight * np.abs(tr - fv) * cells.lengths).sum())


def attach_collar(u: GridFunction, problem: DirichletProblem, cap: float = DEFAULT_CAP,
                  width: int = 2) -> GridFunction:
    """Clamp a collar of outside cells to the capped boundary values."""
    collar = collar_mask(u.mask, width)
    vals = u.values.copy()
    vals[collar] = problem.boundary.capped(cap).extension(u.grid.centers[collar])
    return GridFunction(u.domain, u.mask, vals, collar)


def discrete_functional(u: GridFunction, problem: DirichletProblem,
                        cap: float = DEFAULT_CAP, width: int = 2) -> float:
    """The functional minimized by the primal-dual scheme (collar-clamped phi-TV)."""
    v = attach_collar(u.without_collar(), problem, cap, width)
    return phi_total_variation(v, problem.integrand)


# --------------------------------------------------------------------------
# primal-dual scheme


_RADIAL, _L1, _LINF = 0, 1, 2


def _kind(phi: MetricIntegrand) -> int:
    if phi.family == "axis_norm" and phi.p == 1.0:
        return _L1
    if phi.family == "axis_norm" and phi.p == math.inf:
        return _LINF
    return _RADIAL


@njit(cache=True)
def _value(kind, w, gx, gy):
    if kind == 1:
        return abs(gx) + abs(gy)
    if kind == 2:
        return max(abs(gx), abs(gy))
    return w * math.sqrt(gx * gx + gy * gy)


@njit(cache=True)
def _polar_value(kind, w, zx, zy):
    if kind == 1:
        return max(abs(zx), abs(zy))
    if kind == 2:
        return abs(zx) + abs(zy)
    return math.sqrt(zx * zx + zy * zy) / w


@njit(cache=True)
def _project(kind, w, zx, zy):
    if kind == 1:
        return min(1.0, max(-1.0, zx)), min(1.0, max(-1.0, zy))
    if kind == 2:
        ax, ay = abs(zx), abs(zy)
        if ax + ay <= 1.0:
            return zx, zy
        # soft threshold onto the l1 unit ball in two coordinates
        theta = 0.5 * (ax + ay - 1.0)
        if min(ax, ay) >= theta:
            return math.copysign(ax - theta, zx), math.copysign(ay - theta, zy)
        if ax >= ay:
            return math.copysign(1.0, zx), 0.0
        return 0.0, math.copysign(1.0, zy)
    n = math.sqrt(zx * zx + zy * zy)
    if n > w:
        s = w / n
        return zx * s, zy * s
    return zx, zy


@njit(cache=True)
def _dual_max(kind, w, zx, zy, own):
    m = 0.0
    for i in range(zx.shape[0]):
        for j in range(zx.shape[1]):
            if own[i, j]:
                m = max(m, _polar_value(kind, w[i, j], zx[i, j], zy[i, j]))
    return m


@njit(cache=True)
def _iterate(u, inside, px, py, w, kind, tau, sigma, h, max_iter, tol, window, burn_in,
             div_run):
    """Primal-dual iterations with a fixed sequential update order.

    Returns (best u, zx, zy, raw energies, best energies, iterations,
    status) with status 0 = max_iter reached, 1 = converged, 2 = diverged.
    """
    nx, ny = u.shape
    zx = np.zeros((nx, ny))
    zy = np.zeros((nx, ny))
    ubar = u.copy()
    raw = np.zeros(max_iter + 1)
    hist = np.zeros(max_iter + 1)
    area = h * h
    e = 0.0
    for i in range(nx):
        for j in range(ny):
            gx = (u[i + 1, j] - u[i, j]) / h if px[i, j] else 0.0
            gy = (u[i, j + 1] - u[i, j]) / h if py[i, j] else 0.0
            if px[i, j] or py[i, j]:
                e += _value(kind, w[i, j], gx, gy) * area
    raw[0] = e
    hist[0] = e
    best = u.copy()
    best_e = e
    if e == 0.0:
        return best, zx, zy, raw[:1], hist[:1], 0, 1
    rises = 0
    it = 0
    status = 0
    while it < max_iter:
        it += 1
        for i in range(nx):
            for j in range(ny):
                if px[i, j] or py[i, j]:
                    ax = zx[i, j]
                    ay = zy[i, j]
                    if px[i, j]:
                        ax += sigma * (ubar[i + 1, j] - ubar[i, j]) / h
                    if py[i, j]:
                        ay += sigma * (ubar[i, j + 1] - ubar[i, j]) / h
                    zx[i, j], zy[i, j] = _project(kind, w[i, j], ax, ay)
        for i in range(nx):
            for j in range(ny):
                if inside[i, j]:
                    dv = zx[i, j] + zy[i, j]
                    if i > 0:
                        dv -= zx[i - 1, j]
                    if j > 0:
                        dv -= zy[i, j - 1]
                    old = u[i, j]
                    u[i, j] = old + tau * dv / h
                    ubar[i, j] = 2.0 * u[i, j] - old
        e = 0.0
        for i in range(nx):
            for j in range(ny):
                if px[i, j] or py[i, j]:
                    gx = (u[i + 1, j] - u[i, j]) / h if px[i, j] else 0.0
                    gy = (u[i, j + 1] - u[i, j]) / h if py[i, j] else 0.0
                    e += _value(kind, w[i, j], gx, gy) * area
        raw[it] = e
        if e > raw[it - 1]:
            rises += 1
        else:
            rises = 0
        if rises >= div_run or not np.isfinite(e):
            status = 2
            break
        if e < best_e:
            best_e = e
            best[:, :] = u
        hist[it] = best_e
        if it >= burn_in and it >= window:
            # flat window: every recent energy within tol of each other
            lo = raw[it]
            hi = raw[it]
            for k in range(it - window, it):
                lo = min(lo, raw[k])
                hi = max(hi, raw[k])
            if hi - lo <= tol * max(best_e, 1e-12):
                status = 1
                break
    return best, zx, zy, raw[:it + 1], hist[:it + 1], it, status


def solver_grid(d: Domain, config: SolverConfig) -> GridSpec:
    """The grid used by the primal-dual scheme (margin leaves room for the collar)."""
    return GridSpec.covering(d, config.h, margin=config.collar + 2)


def solve_primal_dual(problem: DirichletProblem, config: SolverConfig) -> Solution:
    """Minimize the collar-relaxed phi-TV functional.

    Raises
    ------
    StepSizeViolation
        Raised by ``SolverConfig`` when tau*sigma*8/h^2 > 1.
    Diverged
        If the energy increases for 1000 consecutive iterations.
    """
    d, phi, h = problem.domain, problem.integrand, config.h
    grid = solver_grid(d, config)
    mask = rasterize(d, grid)
    inside = mask.inside
    collar = collar_mask(mask, config.collar)
    active = inside | collar
    f = problem.boundary.capped(config.cap)

    u = np.zeros(grid.shape)
    ext = f.extension(grid.centers[active])
    if not np.all(np.isfinite(ext)):
        raise SolverError("capped boundary data is not finite on the collar")
    u[active] = ext
    if config.init == "zero":
        u[inside] = 0.0

    px, py = pair_masks(inside, active)
    own = px | py
    w = np.ones(grid.shape)
    if phi.family == "weighted":
        w[own] = phi.weights(project_to_closure(d, grid.centers[own]))
    kind = _kind(phi)
    best, zx, zy, raw, hist, it, status = _iterate(
        u, inside, px, py, w, kind, config.primal_step, config.dual_step, h,
        config.max_iter, config.tol, config.window, BURN_IN, DIVERGENCE_RUN)
    if status == 2:
        raise Diverged(f"energy increased for {DIVERGENCE_RUN} consecutive iterations")
    dual_max = _dual_max(kind, w, zx, zy, own)
    sol_u = GridFunction(d, mask, best, collar)
    return Solution(sol_u, np.stack([zx, zy], axis=-1), hist, raw, int(it), status == 1,
                    problem, config, float(dual_max))
