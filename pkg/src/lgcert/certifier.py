"""Executable regularity checks with explicit constants.

Each check compares a measured quantity of a computed solution with the
theoretical bound and returns a :class:`CertificateReport`.  Failures are
verdicts, never exceptions.  For upper bounds the margin is
``bound - measured``; for the density lower bound it is
``measured - bound``.  A check passes iff ``margin >= -tolerance``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .anisotropy import MetricIntegrand, euclidean, evaluate
from .bv import (BoundaryData, Divergent, GridFunction, LevelSet, boundary_lp_norm,
                 boundary_values, is_plateau_level, isoperimetric_constant, layer_cake_norm,
                 level_grid, perimeter, phi_total_variation, superlevel_set,
                 trace_level_measure, unit_ball_volume, _cells_for)
from .geometry import (Domain, boundary_distance, chord_lengths, contains,
                       diamond_domain, distance_to_boundary, erode)

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"
MONOTONICITY_SLACK = 0.05


class CertifierError(ValueError):
    pass


class RadiusTooLarge(CertifierError):
    pass


class BadBracket(CertifierError):
    pass


# --------------------------------------------------------------------------
# constants


@dataclass(frozen=True)
class RegularityConstants:
    """Constants of the measure, norm and blow-up estimates.

    ``C_N`` is the sharp isoperimetric constant 1/(N omega_N^(1/N)).
    """

    N: int
    p: float
    lam: float = 1.0
    Lam: float = 1.0

    def __post_init__(self):
        if self.N < 2:
            raise CertifierError("dimension must be at least 2")
        if not self.p >= 1:
            raise CertifierError("p must be at least 1")
        if not (0 < self.lam <= self.Lam < math.inf):
            raise CertifierError("ellipticity constants need 0 < lam <= Lam")

    @classmethod
    def for_integrand(cls, phi: MetricIntegrand, p: float, N: int = 2) -> "RegularityConstants":
        return cls(N, p, phi.lam, phi.Lam)

    @property
    def q(self) -> float:
        return self.N * self.p / (self.N - 1) if math.isfinite(self.p) else math.inf

    @property
    def C_N(self) -> float:
        return isoperimetric_constant(self.N)

    @property
    def C_phi(self) -> float:
        return (self.C_N * (self.Lam / self.lam + 1.0)) ** (self.N / (self.N - 1.0))

    @property
    def K(self) -> float:
        if not math.isfinite(self.p):
            return 1.0
        base = self.N / (self.N - 1.0) * self.C_phi
        return base ** ((self.N - 1.0) / (self.N * self.p))

    @property
    def omega_lower(self) -> float:
        """Volume of the unit ball in dimension N - 1."""
        return unit_ball_volume(self.N - 1)

    @property
    def C_blowup(self) -> float:
        return 2.0 ** (self.N - 1) / self.omega_lower

    def as_dict(self) -> dict:
        return {"N": self.N, "p": self.p, "q": self.q, "lam": self.lam, "Lam": self.Lam,
                "C_N": self.C_N, "C_phi": self.C_phi, "K": self.K,
                "C_blowup": self.C_blowup}


# --------------------------------------------------------------------------
# reports


@dataclass
class CertificateReport:
    name: str
    inputs: dict
    measured: float
    bound: float
    margin: float
    tolerance: float
    verdict: str
    reason: str = ""
    anchor: str = ""
    # the check parameter: level t, exponent p, or erosion depth
    level: Optional[float] = None

    def __post_init__(self):
        if self.verdict == SKIPPED and not self.reason:
            raise CertifierError("a skipped check needs a reason")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    @property
    def failed(self) -> bool:
        return self.verdict == FAIL

    def to_dict(self) -> dict:
        return {"name": self.name, "level": self.level, "inputs": self.inputs,
                "measured": self.measured, "bound": self.bound, "margin": self.margin,
                "tolerance": self.tolerance, "verdict": self.verdict, "reason": self.reason,
                "anchor": self.anchor}


def _verdict(margin: float, tolerance: float) -> str:
    return PASS if margin >= -tolerance else FAIL


def _report(name, inputs, measured, bound, tolerance, anchor, level=None, lower=False,
            reason="") -> CertificateReport:
    margin = measured - bound if lower else bound - measured
    return CertificateReport(name, inputs, float(measured), float(bound), float(margin),
                             float(tolerance), _verdict(margin, tolerance), reason, anchor,
                             level)


def _skipped(name, inputs, reason, anchor, level=None) -> CertificateReport:
    nan = float("nan")
    return CertificateReport(name, inputs, nan, nan, nan, 0.0, SKIPPED, reason, anchor, level)


def sort_reports(reports: Sequence[CertificateReport]) -> list[CertificateReport]:
    """Deterministic order: by check name, then level (unlevelled first)."""
    return sorted(reports, key=lambda r: (r.name, -math.inf if r.level is None else r.level))


def any_failed(reports: Sequence[CertificateReport]) -> bool:
    return any(r.failed for r in reports)


# --------------------------------------------------------------------------
# checks


ANCHOR_MEASURE = "superlevel measure bound |{u>=t}| <= C(phi,N) H^{N-1}({f>=t})^{N/(N-1)}"
ANCHOR_NORM = "integrability bound ||u_+||_q <= K(N,p) ||f_+||_p with q = Np/(N-1)"
ANCHOR_MAX = "maximum principle ||u_+||_inf <= ||f_+||_inf"
ANCHOR_VARIATION = "variation estimate int |Du|_phi <= int phi(x, nu) |f| dH^{N-1}"
ANCHOR_MONOTONE = "density ratio of minimal boundaries is nondecreasing and at least one"
ANCHOR_OSC = "blow-up rate osc_{Omega'} u <= C(N) ||f||_1 / dist(bd Omega, bd Omega')^{N-1}"


def default_levels(u: GridFunction, count: int = 20) -> np.ndarray:
    """Interior levels strictly between min and max of u (midpoints of a level grid)."""
    vals = u.inside_values()
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        return np.array([lo])
    nodes = level_grid(lo, hi, count)
    return 0.5 * (nodes[:-1] + nodes[1:])


def check_level_measure(u: GridFunction, f: BoundaryData, phi: Optional[MetricIntegrand],
                        consts: RegularityConstants, levels: Optional[Sequence[float]] = None,
                        n: int = 2 ** 14) -> list[CertificateReport]:
    """Per level: |E_t| against C(phi,N) H^1({f >= t})^(N/(N-1)).

    The tolerance 2h (P(E_t) + H^1({f >= t})) bounds the area of the cells
    cut by the interface and the boundary.  Levels where ``{f = t}`` has
    positive measure are skipped.
    """
    phi = phi or euclidean()
    levels = default_levels(u) if levels is None else np.asarray(levels, dtype=float)
    expo = consts.N / (consts.N - 1.0)
    out = []
    for t in levels:
        t = float(t)
        inputs = {"t": t, "C_phi": consts.C_phi, "h": u.h}
        if is_plateau_level(f, t, n):
            out.append(_skipped("level_measure", inputs, "plateau level of the boundary datum",
                                ANCHOR_MEASURE, t))
            continue
        ls = superlevel_set(u, t)
        trace = trace_level_measure(f, t, n)
        tol = 2 * u.h * (perimeter(ls) + trace)
        out.append(_report("level_measure", {**inputs, "trace_measure": trace},
                           ls.region.area, consts.C_phi * trace ** expo, tol,
                           ANCHOR_MEASURE, t))
    return out


def _sup_norm(u: GridFunction) -> float:
    vals = u.inside_values()
    return float(np.max(vals)) if len(vals) else 0.0


def check_lq_norm(u: GridFunction, f: BoundaryData, p: float, consts: RegularityConstants,
                  cap: Optional[float] = None, levels: int = 400) -> list[CertificateReport]:
    """||u_+-||_q against K ||f_+-||_p, one report per sign.

    Divergence of the uncapped ``f`` skips the check.  Otherwise both sides
    use the data capped at ``cap`` (the problem ``u`` actually solves).
    The tolerance is 1 % of the measured norm plus the norm of a boundary
    strip of width 2h at height ||u_+-||_inf.
    """
    if consts.p != p:
        consts = RegularityConstants(consts.N, p, consts.lam, consts.Lam)
    q = consts.q
    length = f.domain.total_arc_length
    out = []
    for sign, up, fp in (("+", u.positive_part(), f.positive_part()),
                         ("-", u.negative_part(), f.negative_part())):
        name = f"lq_norm{sign}"
        inputs = {"p": p, "q": q, "K": consts.K, "h": u.h, "cap": cap}
        if math.isinf(p):
            measured = _sup_norm(up)
            fb = fp if cap is None else fp.capped(cap)
            vals, _ = boundary_values(fb)
            bound = float(np.max(vals)) if len(vals) else 0.0
            tol = 3 * u.h * abs(bound) + 1e-6
            out.append(_report(name, inputs, measured, bound, tol, ANCHOR_NORM, level=p))
            continue
        try:
            boundary_lp_norm(fp, p)
        except Divergent as exc:
            out.append(_skipped(name, inputs, f"Divergent: {exc}", ANCHOR_NORM, level=p))
            continue
        fb = fp if cap is None else fp.capped(cap)
        bound = consts.K * boundary_lp_norm(fb, p)
        measured = layer_cake_norm(up, q, levels)
        tol = 0.01 * measured + (2 * u.h * length) ** (1.0 / q) * _sup_norm(up)
        out.append(_report(name, inputs, measured, bound, tol, ANCHOR_NORM, level=p))
    return out


def check_max_principle(u: GridFunction, f: BoundaryData, cap: Optional[float] = None,
                        n: int = 2 ** 14) -> CertificateReport:
    """max u_+ over cells against ess sup f_+ on the arc partition."""
    fb = f.positive_part() if cap is None else f.positive_part().capped(cap)
    vals, _ = boundary_values(fb, n)
    sup_f = float(np.max(vals))
    inputs = {"h": u.h, "cap": cap}
    if not math.isfinite(sup_f):
        return _skipped("max_principle", inputs, "boundary datum is unbounded", ANCHOR_MAX)
    measured = max(_sup_norm(u), 0.0)
    tol = 3 * u.h * sup_f + 1e-6
    return _report("max_principle", inputs, measured, sup_f, tol, ANCHOR_MAX)


def check_variation_estimate(u: GridFunction, f: BoundaryData, phi: Optional[MetricIntegrand],
                             cap: Optional[float] = None, n: int = 2 ** 14) -> CertificateReport:
    """phi-TV(u) inside the domain against int phi(x, nu) |f| ds."""
    phi = phi or euclidean()
    fb = f if cap is None else f.capped(cap)
    cells = _cells_for(fb, n)
    vals = fb.at_points(cells.points)
    rhs = float((evaluate(phi, cells.points, cells.normals) * np.abs(vals) * cells.lengths).sum())
    measured = phi_total_variation(u.without_collar(), phi)
    tol = 3 * u.h * rhs
    return _report("variation_estimate", {"h": u.h, "cap": cap, "integrand": phi.name},
                   measured, rhs, tol, ANCHOR_VARIATION)


def _segment_length_in_disk(a: np.ndarray, b: np.ndarray, x: np.ndarray, r: float) -> float:
    d = b - a
    f = a - x
    A = (d * d).sum(axis=1)
    B = 2 * (f * d).sum(axis=1)
    C = (f * f).sum(axis=1) - r * r
    disc = B * B - 4 * A * C
    ok = (disc > 0) & (A > 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = np.clip((-B - sq) / (2 * A), 0.0, 1.0)
        t1 = np.clip((-B + sq) / (2 * A), 0.0, 1.0)
    span = np.where(ok, np.maximum(t1 - t0, 0.0), 0.0)
    return float((span * np.sqrt(A)).sum())


def density_ratios(ls: LevelSet, x, radii: Sequence[float], N: int = 2) -> np.ndarray:
    """H^1(interface within B(x, r)) / (omega_1 r) for each radius."""
    a, b = ls.segments
    x = np.asarray(x, dtype=float)
    omega = unit_ball_volume(N - 1)
    return np.array([_segment_length_in_disk(a, b, x, r) / (omega * r ** (N - 1))
                     for r in radii])


def check_monotonicity(ls: LevelSet, x, radii: Sequence[float],
                       phi: Optional[MetricIntegrand] = None, N: int = 2) -> CertificateReport:
    """Density ratios nondecreasing within 5 % slack and at least 1 - 5 %.

    Raises
    ------
    RadiusTooLarge
        If the largest radius reaches the boundary of the domain.
    """
    radii = [float(r) for r in radii]
    if not radii or any(r <= 0 for r in radii) or any(np.diff(radii) <= 0):
        raise CertifierError("radii must be positive and increasing")
    x = np.asarray(x, dtype=float)
    dist = float(distance_to_boundary(ls.domain, x[None, :])[0])
    if not contains(ls.domain, x) or radii[-1] >= dist:
        raise RadiusTooLarge(f"radius {radii[-1]:.6g} reaches the boundary "
                             f"(distance {dist:.6g})")
    inputs = {"x": [float(x[0]), float(x[1])], "radii": radii, "t": ls.t}
    if phi is not None and not phi.is_isotropic:
        return _skipped("monotonicity", inputs, "monotonicity is stated for isotropic problems",
                        ANCHOR_MONOTONE, ls.t)
    ratios = density_ratios(ls, x, radii, N)
    inputs["ratios"] = [float(v) for v in ratios]
    slack = MONOTONICITY_SLACK
    monotone = bool(np.all(ratios[1:] >= ratios[:-1] * (1 - slack)))
    rep = _report("monotonicity", inputs, ratios[0], 1.0, slack, ANCHOR_MONOTONE, ls.t,
                  lower=True)
    if not monotone:
        rep.verdict = FAIL
        rep.reason = "density ratio decreases beyond the slack"
    return rep


def sample_contour_points(ls: LevelSet, count: int, min_dist: float) -> np.ndarray:
    """Evenly spread contour vertices at distance > ``min_dist`` from the boundary."""
    if not ls.contour:
        return np.zeros((0, 2))
    pts = np.concatenate(ls.contour)
    far = distance_to_boundary(ls.domain, pts) > min_dist
    pts = pts[far]
    if len(pts) == 0:
        return pts
    idx = np.unique(np.linspace(0, len(pts) - 1, min(count, len(pts))).round().astype(int))
    return pts[idx]


def check_oscillation(u: GridFunction, f: BoundaryData, delta: float,
                      consts: RegularityConstants, cap: Optional[float] = None
                      ) -> CertificateReport:
    """Oscillation of u over erode(Omega, delta) against C(N) ||f||_1 / dist^(N-1).

    Raises
    ------
    EmptyErosion
        If ``delta`` is not below the inradius.
    """
    d = u.domain
    inner = erode(d, delta)
    dist = boundary_distance(d, inner)
    fb = f if cap is None else f.capped(cap)
    l1 = boundary_lp_norm(fb, 1.0)
    inputs = {"delta": delta, "dist": dist, "f_l1": l1, "C_blowup": consts.C_blowup,
              "cap": cap, "h": u.h}
    sel = u.mask.inside & contains(inner, u.grid.centers)
    if not sel.any():
        return _skipped("oscillation", inputs, "no cells inside the eroded domain", ANCHOR_OSC,
                        delta)
    vals = u.values[sel]
    osc = float(vals.max() - vals.min())
    bound = consts.C_blowup * l1 / dist ** (consts.N - 1)
    return _report("oscillation", inputs, osc, bound, 0.0, ANCHOR_OSC, delta)


# --------------------------------------------------------------------------
# optimal exponent experiment


@dataclass
class ExponentRow:
    p: float
    cap: float
    norm: float
    flag: str


@dataclass
class ExponentExperiment:
    n: int
    p_star: float
    rows: list[ExponentRow] = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    passed: bool = False

    def to_dict(self) -> dict:
        return {"n": self.n, "p_star": self.p_star, "passed": self.passed,
                "flags": {str(k): v for k, v in self.flags.items()},
                "rows": [{"p": r.p, "cap": r.cap, "norm": r.norm, "flag": r.flag}
                         for r in self.rows]}


def _gauss_panels(a: float, b: float, breaks: Sequence[float], depth: int = 60,
                  order: int = 20) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on panels graded geometrically towards ``a``."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    L = b - a
    edges = [a] + [a + L * 2.0 ** (-k) for k in range(depth, 0, -1)] + [b]
    edges = np.unique(np.concatenate([edges, [x for x in breaks if a < x < b]]))
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * xg[None, :]).ravel()
    weights = (half[:, None] * wg[None, :]).ravel()
    return nodes, weights


def oracle_lp_norm(n: int, p: float, cap: float, d: Optional[Domain] = None,
                   direction=(1.0, 0.0)) -> float:
    """L^p norm over the domain of min(g_n(<x, e> - s0), cap).

    Integrates chord length times the capped profile in the transverse
    coordinate, with panels graded towards the singular vertex and a break
    at the point where the cap becomes active.
    """
    d = d or diamond_domain()
    e = np.asarray(direction, dtype=float)
    e = e / np.hypot(*e)
    proj = d.points @ e
    s0, s1 = float(proj.min()), float(proj.max())
    r_cap = cap ** (-n / (n - 1.0))
    nodes, weights = _gauss_panels(0.0, s1 - s0, [r_cap])
    vals = np.minimum(nodes ** (-1.0 + 1.0 / n), cap)
    chords = chord_lengths(d, e, s0 + nodes)
    return float((weights * chords * vals ** p).sum()) ** (1.0 / p)


def optimal_exponent_experiment(n: int, exponents: Sequence[float], caps: Sequence[float],
                                d: Optional[Domain] = None) -> ExponentExperiment:
    """Capped-oracle L^p norms for increasing caps, flagged stable or diverging.

    A row sequence is "stable" when the last two norms differ by < 5 %,
    "diverging" when every cap increase raises the norm by > 10 %, and
    "undetermined" otherwise.  The experiment passes when every p below
    0.9 p* is stable and every p above 1.1 p* is diverging.

    Raises
    ------
    BadBracket
        If the exponents do not straddle p* = 2n/(n-1).
    """
    if n < 2:
        raise CertifierError("n must be at least 2")
    caps = [float(c) for c in caps]
    if len(caps) < 2 or any(np.diff(caps) <= 0) or caps[0] <= 0:
        raise CertifierError("caps must be positive and increasing (at least two)")
    p_star = 2.0 * n / (n - 1.0)
    exps = [float(p) for p in exponents]
    if not exps or min(exps) >= p_star or max(exps) <= p_star:
        raise BadBracket(f"exponents {exps} do not straddle p* = {p_star:.6g}")
    res = ExponentExperiment(n, p_star)
    ok = True
    for p in sorted(exps):
        norms = [oracle_lp_norm(n, p, c, d) for c in caps]
        growth = np.array(norms[1:]) / np.array(norms[:-1]) - 1.0
        if abs(growth[-1]) < 0.05:
            flag = "stable"
        elif np.all(growth > 0.10):
            flag = "diverging"
        else:
            flag = "undetermined"
        res.flags[p] = flag
        for c, v in zip(caps, norms):
            res.rows.append(ExponentRow(p, c, v, flag))
        if p < 0.9 * p_star and flag != "stable":
            ok = False
        if p > 1.1 * p_star and flag != "diverging":
            ok = False
    res.passed = ok
    return res
