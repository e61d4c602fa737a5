"""Pipelines behind the command line: solve, certify, sweep, optimal-exponent."""

from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .anisotropy import MetricIntegrand
from .bv import GridFunction, l1_distance, level_sweep, SWEEP_COLUMNS, superlevel_set
from .certifier import (CertificateReport, RegularityConstants, _skipped, any_failed,
                        check_level_measure, check_lq_norm, check_max_principle,
                        check_monotonicity, check_oscillation, check_variation_estimate,
                        default_levels, optimal_exponent_experiment, sample_contour_points,
                        sort_reports, ANCHOR_MONOTONE, ANCHOR_OSC)
from .config import RunConfig
from .geometry import EmptyErosion
from .reporting import (_write_text, report_table, render_level_lines, write_convergence_csv, write_csv,
                        write_grid_csv, write_json)
from .solvers import (DirichletProblem, NonMonotone, Solution, UnsupportedIntegrand,
                      discrete_functional, oracle_for, solve_primal_dual, solver_grid)


class PipelineError(RuntimeError):
    """A solver or certifier failure, with the pipeline stage in the message."""


@dataclass
class RunArtifacts:
    report: Path
    csv: list[Path] = field(default_factory=list)
    svg: list[Path] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    exit_code: int = 0
    # in-memory results for callers that go on computing (not written)
    solution: Optional[GridFunction] = None
    checks: list = field(default_factory=list)
    text: list[Path] = field(default_factory=list)

    @property
    def paths(self) -> list[Path]:
        """Every deterministic artifact (metadata.json carries a timestamp and is left out)."""
        return [self.report, *self.text, *self.csv, *self.svg]


@dataclass
class SolveResult:
    u: GridFunction
    summary: dict
    solution: Optional[Solution] = None


def compute_solution(cfg: RunConfig, problem: Optional[DirichletProblem] = None) -> SolveResult:
    problem = problem or cfg.problem()
    sc = cfg.solver_config()
    grid = solver_grid(problem.domain, sc)
    method = cfg.solver["method"]
    summary = {"method": method, "h": sc.h, "cap": sc.cap}
    if method == "oracle":
        try:
            u = oracle_for(problem, grid, sc.cap)
        except (NonMonotone, UnsupportedIntegrand) as exc:
            raise PipelineError(f"oracle: {exc}") from exc
        summary["discrete_functional"] = discrete_functional(u, problem, sc.cap, sc.collar)
        return SolveResult(u, summary)
    try:
        sol = solve_primal_dual(problem, sc)
    except ValueError as exc:
        raise PipelineError(f"primal_dual: {exc}") from exc
    summary.update({"iterations": sol.iterations, "converged": sol.converged,
                    "discrete_functional": float(sol.energy_history[-1]),
                    "dual_max": sol.dual_max})
    try:
        orc = oracle_for(problem, grid, sc.cap)
    except (NonMonotone, UnsupportedIntegrand):
        orc = None
    if orc is not None:
        summary["oracle_l1_gap"] = l1_distance(sol.u, orc) / max(orc.l1_norm(), 1e-300)
    return SolveResult(sol.u, summary, sol)


def monotonicity_reports(u: GridFunction, phi: MetricIntegrand, radii_cells: Sequence[int],
                         count: int) -> list[CertificateReport]:
    """Density checks at ``count`` contour points spread over interior levels."""
    radii = [u.h * k for k in radii_cells]
    inputs = {"radii": radii, "points": count}
    if count == 0:
        return []
    if not phi.is_isotropic:
        return [_skipped("monotonicity", inputs, "monotonicity is stated for isotropic problems",
                         ANCHOR_MONOTONE)]
    pool = []
    for t in default_levels(u, 8):
        ls = superlevel_set(u, float(t))
        for x in sample_contour_points(ls, count, radii[-1] + 2 * u.h):
            pool.append((ls, x))
    if not pool:
        return [_skipped("monotonicity", inputs, "no contour points away from the boundary",
                         ANCHOR_MONOTONE)]
    pick = np.unique(np.linspace(0, len(pool) - 1, min(count, len(pool))).round().astype(int))
    return [check_monotonicity(pool[i][0], pool[i][1], radii, phi) for i in pick]


def certify_solution(u: GridFunction, problem: DirichletProblem, cap: float,
                     options: dict) -> list[CertificateReport]:
    """All applicable checks for one solution, in deterministic order."""
    phi, f = problem.integrand, problem.boundary
    fc = f.capped(cap)
    reports: list[CertificateReport] = []
    base = RegularityConstants.for_integrand(phi, 1.0, problem.N)
    levels = options["levels"]
    if isinstance(levels, int):
        levels = default_levels(u, levels)
    reports += check_level_measure(u, fc, phi, base, levels)
    for p in options["exponents"]:
        reports += check_lq_norm(u, f, p, RegularityConstants.for_integrand(phi, p), cap=cap)
    reports.append(check_max_principle(u, f, cap))
    reports.append(check_variation_estimate(u, f, phi, cap))
    for delta in options["deltas"]:
        try:
            reports.append(check_oscillation(u, f, delta, base, cap))
        except EmptyErosion as exc:
            reports.append(_skipped("oscillation", {"delta": delta}, f"EmptyErosion: {exc}",
                                    ANCHOR_OSC, delta))
    reports += monotonicity_reports(u, phi, options["radii_cells"],
                                    options["monotonicity_points"])
    return sort_reports(reports)


def _metadata(cfg: RunConfig) -> dict:
    return {"version": __version__, "config_hash": cfg.config_hash(),
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}


def _svg_levels(cfg: RunConfig, u: GridFunction) -> list[float]:
    if cfg.certifier["svg_levels"] is not None:
        return cfg.certifier["svg_levels"]
    return [float(t) for t in default_levels(u, 6)] if np.ptp(u.inside_values()) > 0 else []


def run(cfg: RunConfig) -> RunArtifacts:
    """Execute the configured command and write its artifacts."""
    out = cfg.output_dir()
    meta = _metadata(cfg)
    if cfg.command == "example-optimal":
        c = cfg.certifier
        try:
            exp = optimal_exponent_experiment(c["n"], c["optimal_exponents"], c["caps"],
                                              cfg.domain())
        except ValueError as exc:
            raise PipelineError(f"example-optimal: {exc}") from exc
        table = write_csv(out / "optimal_exponent.csv", ("p", "cap", "norm", "flag"),
                          ((r.p, r.cap, r.norm, r.flag) for r in exp.rows))
        report = write_json({"command": cfg.command, "config": cfg.to_dict(),
                             "experiment": exp.to_dict()}, out / "report.json")
        arts = RunArtifacts(report, [table], [], meta, 0 if exp.passed else 1)
        write_json(meta, out / "metadata.json")
        return arts

    problem = cfg.problem()
    res = compute_solution(cfg, problem)
    u = res.u
    csvs = [write_grid_csv(u, out / "solution.csv")]
    if res.solution is not None:
        csvs.append(write_convergence_csv(res.solution.energy_history, out / "convergence.csv"))
    svgs = [render_level_lines(u, _svg_levels(cfg, u), out / "levels.svg")]
    body = {"command": cfg.command, "config": cfg.to_dict(), "solution": res.summary}
    code = 0
    reports: list[CertificateReport] = []
    texts: list[Path] = []
    if cfg.command == "certify":
        try:
            reports = certify_solution(u, problem, cfg.solver["cap"], cfg.certifier)
        except ValueError as exc:
            raise PipelineError(f"certify: {exc}") from exc
        body["checks"] = [r.to_dict() for r in reports]
        body["constants"] = RegularityConstants.for_integrand(problem.integrand, 1.0).as_dict()
        texts.append(_write_text(out / "report.txt", report_table(reports)))
        code = 1 if any_failed(reports) else 0
    elif cfg.command == "sweep":
        levels = cfg.certifier["levels"]
        if isinstance(levels, int):
            levels = default_levels(u, levels)
        rows = level_sweep(u, problem.boundary.capped(cfg.solver["cap"]), problem.integrand,
                           levels)
        csvs.append(write_csv(out / "sweep.csv", SWEEP_COLUMNS,
                              ([r[c] for c in SWEEP_COLUMNS] for r in rows)))
    report = write_json(body, out / "report.json")
    write_json(meta, out / "metadata.json")
    return RunArtifacts(report, csvs, svgs, meta, code, u, reports, texts)
