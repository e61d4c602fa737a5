"""Run configurations: parsing, validation and problem construction.

A configuration is a JSON object::

    {"command": "certify",
     "domain": {"builtin": "diamond"},
     "integrand": {"family": "euclidean"},
     "boundary": {"family": "g_n", "n": 3, "direction": [1, 0]},
     "h": 0.0078125,
     "solver": {"method": "primal_dual", "cap": 20},
     "certifier": {"exponents": [1, 1.5]},
     "output_dir": "out"}

Unknown keys are rejected so that typos surface as errors.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from . import anisotropy as an
from . import bv
from . import geometry as geo
from .solvers import DEFAULT_CAP, DirichletProblem, SolverConfig, SolverError

COMMANDS = ("solve", "certify", "example-optimal", "sweep")
OUTPUT_ROOT_ENV = "LGCERT_OUTPUT_ROOT"

SOLVER_DEFAULTS = {"method": "primal_dual", "cap": DEFAULT_CAP, "collar": 2, "tau": None,
                   "sigma": None, "max_iter": 20000, "tol": 1e-6, "window": 200}
CERTIFIER_DEFAULTS = {"levels": 20, "exponents": [1.0, 1.5], "deltas": [0.1, 0.25],
                      "radii_cells": [2, 4, 6, 8, 10], "monotonicity_points": 10,
                      "n": 3, "optimal_exponents": [2.0, 2.5, 2.8, 3.2, 3.5, 4.0],
                      "caps": [100.0, 1000.0, 10000.0], "svg_levels": None}


class ConfigInvalid(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigInvalid(path, message)


def _number(value, path: str, positive: bool = False, allow_none: bool = False) -> Optional[float]:
    if value is None and allow_none:
        return None
    _require(isinstance(value, (int, float)) and not isinstance(value, bool), path,
             "must be a number")
    value = float(value)
    _require(not math.isnan(value), path, "must not be NaN")
    if positive:
        _require(value > 0 and math.isfinite(value), path, "must be positive")
    return value


def _integer(value, path: str, minimum: int = 1) -> int:
    _require(isinstance(value, int) and not isinstance(value, bool), path, "must be an integer")
    _require(value >= minimum, path, f"must be at least {minimum}")
    return int(value)


def _point(value, path: str) -> list[float]:
    _require(isinstance(value, (list, tuple)) and len(value) == 2, path,
             "must be a list of two numbers")
    return [_number(x, f"{path}[{i}]") for i, x in enumerate(value)]


def _vector(value, path: str) -> list[float]:
    v = _point(value, path)
    _require(math.hypot(*v) > 0, path, "must be nonzero")
    return v


def _keys(obj, allowed, path: str) -> None:
    _require(isinstance(obj, dict), path, "must be an object")
    extra = sorted(set(obj) - set(allowed))
    _require(not extra, f"{path}.{extra[0]}" if extra else path, "unknown field")


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; ``raw`` is the normalized JSON object."""

    raw: dict

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(normalize(data))

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid("<root>", f"not valid JSON ({exc.msg})") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigInvalid("<file>", f"cannot read {path}: {exc.strerror}") from exc
        return cls.from_json(text)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=2)

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()

    @property
    def command(self) -> str:
        return self.raw["command"]

    @property
    def h(self) -> float:
        return self.raw["h"]

    @property
    def solver(self) -> dict:
        return self.raw["solver"]

    @property
    def certifier(self) -> dict:
        return self.raw["certifier"]

    def output_dir(self) -> Path:
        out = Path(self.raw["output_dir"])
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            return Path(root) / out
        if root:
            return Path(root) / out.name
        return out

    def with_updates(self, **changes) -> "RunConfig":
        data = self.to_dict()
        data.update(changes)
        return RunConfig.from_dict(data)

    def domain(self) -> geo.Domain:
        return build_domain(self.raw["domain"])

    def integrand(self, domain: Optional[geo.Domain] = None) -> an.MetricIntegrand:
        return build_integrand(self.raw["integrand"], domain or self.domain())

    def boundary(self, domain: Optional[geo.Domain] = None) -> bv.BoundaryData:
        return build_boundary(self.raw["boundary"], domain or self.domain())

    def problem(self) -> DirichletProblem:
        d = self.domain()
        return DirichletProblem(d, self.integrand(d), self.boundary(d))

    def solver_config(self) -> SolverConfig:
        s = self.solver
        try:
            return SolverConfig(h=self.h, collar=s["collar"], tau=s["tau"], sigma=s["sigma"],
                                max_iter=s["max_iter"], tol=s["tol"], cap=s["cap"],
                                window=s["window"])
        except SolverError as exc:
            raise ConfigInvalid("solver", str(exc)) from exc


# --------------------------------------------------------------------------
# normalization


def normalize(data: Any) -> dict:
    _keys(data, ("command", "domain", "integrand", "boundary", "h", "solver", "certifier",
                 "output_dir"), "<root>")
    out: dict = {}
    command = data.get("command", "certify")
    _require(command in COMMANDS, "command", f"must be one of {', '.join(COMMANDS)}")
    out["command"] = command
    out["domain"] = _normalize_domain(data.get("domain", {"builtin": "diamond"}))
    out["integrand"] = _normalize_integrand(data.get("integrand", {"family": "euclidean"}))
    out["boundary"] = _normalize_boundary(data.get("boundary", {"family": "g_n", "n": 3}))
    out["h"] = _number(data.get("h", 1 / 64), "h", positive=True)
    out["solver"] = _normalize_solver(data.get("solver", {}))
    out["certifier"] = _normalize_certifier(data.get("certifier", {}))
    output_dir = data.get("output_dir", "lgcert-out")
    _require(isinstance(output_dir, str) and output_dir != "", "output_dir",
             "must be a nonempty string")
    out["output_dir"] = output_dir
    # building the objects validates geometry and data against each other
    try:
        d = build_domain(out["domain"])
    except geo.GeometryError as exc:
        raise ConfigInvalid("domain", str(exc)) from exc
    try:
        build_integrand(out["integrand"], d)
    except an.AnisotropyError as exc:
        raise ConfigInvalid("integrand", str(exc)) from exc
    try:
        build_boundary(out["boundary"], d)
    except (bv.BVError, geo.GeometryError) as exc:
        raise ConfigInvalid("boundary", str(exc)) from exc
    RunConfig(out).solver_config()
    return out


def _normalize_domain(spec) -> dict:
    _keys(spec, ("builtin", "vertices"), "domain")
    if "builtin" in spec:
        _require("vertices" not in spec, "domain", "give either builtin or vertices")
        _require(spec["builtin"] in geo.BUILTIN_DOMAINS, "domain.builtin",
                 f"unknown domain (known: {', '.join(sorted(geo.BUILTIN_DOMAINS))})")
        return {"builtin": spec["builtin"]}
    _require("vertices" in spec, "domain", "needs builtin or vertices")
    verts = spec["vertices"]
    _require(isinstance(verts, list), "domain.vertices", "must be a list of points")
    return {"vertices": [_point(v, f"domain.vertices[{i}]") for i, v in enumerate(verts)]}


def _normalize_integrand(spec) -> dict:
    _require(isinstance(spec, dict) and "family" in spec, "integrand", "needs a family")
    fam = spec["family"]
    if fam == "euclidean":
        _keys(spec, ("family",), "integrand")
        return {"family": "euclidean"}
    if fam == "weighted":
        _keys(spec, ("family", "weight", "value"), "integrand")
        weight = spec.get("weight", "quadratic")
        _require(weight in ("quadratic", "constant"), "integrand.weight",
                 "must be quadratic or constant")
        if weight == "constant":
            return {"family": "weighted", "weight": "constant",
                    "value": _number(spec.get("value"), "integrand.value", positive=True)}
        return {"family": "weighted", "weight": "quadratic"}
    if fam == "axis_norm":
        _keys(spec, ("family", "p"), "integrand")
        p = spec.get("p")
        if p == "inf":
            p = math.inf
        p = _number(p, "integrand.p")
        _require(p in (1.0, 2.0, math.inf), "integrand.p", "must be 1, 2 or \"inf\"")
        return {"family": "axis_norm", "p": "inf" if math.isinf(p) else p}
    raise ConfigInvalid("integrand.family", f"unknown family {fam!r}")


def _normalize_boundary(spec) -> dict:
    _require(isinstance(spec, dict) and "family" in spec, "boundary", "needs a family")
    fam = spec["family"]
    if fam == "constant":
        _keys(spec, ("family", "value"), "boundary")
        return {"family": "constant", "value": _number(spec.get("value", 1.0), "boundary.value")}
    if fam == "step":
        _keys(spec, ("family", "direction", "threshold", "low", "high"), "boundary")
        return {"family": "step",
                "direction": _vector(spec.get("direction", [1.0, 0.0]), "boundary.direction"),
                "threshold": _number(spec.get("threshold"), "boundary.threshold",
                                     allow_none=True),
                "low": _number(spec.get("low", 0.0), "boundary.low"),
                "high": _number(spec.get("high", 1.0), "boundary.high")}
    if fam == "g_n":
        _keys(spec, ("family", "n", "direction"), "boundary")
        return {"family": "g_n", "n": _integer(spec.get("n", 3), "boundary.n", 2),
                "direction": _vector(spec.get("direction", [1.0, 0.0]), "boundary.direction")}
    if fam == "piecewise_linear":
        _keys(spec, ("family", "knots"), "boundary")
        knots = spec.get("knots")
        _require(isinstance(knots, list) and knots, "boundary.knots",
                 "must be a nonempty list of [s, value] pairs")
        out = []
        for i, k in enumerate(knots):
            _require(isinstance(k, list) and len(k) == 2, f"boundary.knots[{i}]",
                     "must be an [s, value] pair")
            out.append([_number(k[0], f"boundary.knots[{i}][0]"),
                        _number(k[1], f"boundary.knots[{i}][1]")])
        return {"family": "piecewise_linear", "knots": out}
    raise ConfigInvalid("boundary.family", f"unknown family {fam!r}")


def _normalize_solver(spec) -> dict:
    _keys(spec, tuple(SOLVER_DEFAULTS), "solver")
    s = {**SOLVER_DEFAULTS, **spec}
    _require(s["method"] in ("oracle", "primal_dual"), "solver.method",
             "must be oracle or primal_dual")
    s["cap"] = _number(s["cap"], "solver.cap", positive=True)
    s["collar"] = _integer(s["collar"], "solver.collar")
    s["tau"] = _number(s["tau"], "solver.tau", positive=True, allow_none=True)
    s["sigma"] = _number(s["sigma"], "solver.sigma", positive=True, allow_none=True)
    s["max_iter"] = _integer(s["max_iter"], "solver.max_iter")
    s["tol"] = _number(s["tol"], "solver.tol")
    _require(s["tol"] >= 0, "solver.tol", "must be nonnegative")
    s["window"] = _integer(s["window"], "solver.window")
    return s


def _number_list(value, path: str, positive: bool = False) -> list[float]:
    _require(isinstance(value, list) and value, path, "must be a nonempty list")
    return [_number(v, f"{path}[{i}]", positive=positive) for i, v in enumerate(value)]


def _normalize_certifier(spec) -> dict:
    _keys(spec, tuple(CERTIFIER_DEFAULTS), "certifier")
    c = {**CERTIFIER_DEFAULTS, **spec}
    if isinstance(c["levels"], list):
        c["levels"] = _number_list(c["levels"], "certifier.levels")
    else:
        c["levels"] = _integer(c["levels"], "certifier.levels", 2)
    c["exponents"] = _number_list(c["exponents"], "certifier.exponents", positive=True)
    _require(all(p >= 1 for p in c["exponents"]), "certifier.exponents",
             "exponents must be at least 1")
    c["deltas"] = _number_list(c["deltas"], "certifier.deltas", positive=True)
    _require(isinstance(c["radii_cells"], list) and c["radii_cells"], "certifier.radii_cells",
             "must be a nonempty list")
    c["radii_cells"] = [_integer(r, f"certifier.radii_cells[{i}]")
                        for i, r in enumerate(c["radii_cells"])]
    _require(all(b > a for a, b in zip(c["radii_cells"], c["radii_cells"][1:])),
             "certifier.radii_cells", "must be increasing")
    c["monotonicity_points"] = _integer(c["monotonicity_points"],
                                        "certifier.monotonicity_points", 0)
    c["n"] = _integer(c["n"], "certifier.n", 2)
    c["optimal_exponents"] = _number_list(c["optimal_exponents"], "certifier.optimal_exponents",
                                          positive=True)
    c["caps"] = _number_list(c["caps"], "certifier.caps", positive=True)
    _require(len(c["caps"]) >= 2 and all(b > a for a, b in zip(c["caps"], c["caps"][1:])),
             "certifier.caps", "must be increasing with at least two entries")
    if c["svg_levels"] is not None:
        c["svg_levels"] = _number_list(c["svg_levels"], "certifier.svg_levels")
    return c


# --------------------------------------------------------------------------
# builders


def build_domain(spec: dict) -> geo.Domain:
    if "builtin" in spec:
        return geo.BUILTIN_DOMAINS[spec["builtin"]]()
    return geo.build_convex_polygon(spec["vertices"])


def build_integrand(spec: dict, domain: geo.Domain) -> an.MetricIntegrand:
    fam = spec["family"]
    if fam == "euclidean":
        return an.euclidean()
    if fam == "weighted":
        if spec["weight"] == "constant":
            return an.constant_weight(spec["value"])
        return an.quadratic_weight(domain)
    p = math.inf if spec["p"] == "inf" else spec["p"]
    return an.axis_norm(p)


def build_boundary(spec: dict, domain: geo.Domain) -> bv.BoundaryData:
    fam = spec["family"]
    if fam == "constant":
        return bv.constant_data(domain, spec["value"])
    if fam == "step":
        return bv.step_data(domain, spec["direction"], spec["threshold"], spec["low"],
                            spec["high"])
    if fam == "g_n":
        return bv.g_n_data(domain, spec["n"], spec["direction"])
    return bv.piecewise_linear_data(domain, spec["knots"])
