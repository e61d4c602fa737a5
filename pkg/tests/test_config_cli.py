import json
import math
import os

import numpy as np
import pytest

from lgcert import cli, pipeline
from lgcert.bv import grid_function, g_n_profile
from lgcert.certifier import FAIL, CertificateReport
from lgcert.config import OUTPUT_ROOT_ENV, ConfigInvalid, RunConfig
from lgcert.geometry import GridSpec
from lgcert.reporting import IOFailure, canonical, render_level_lines
from lgcert.solvers import chord_oracle

from conftest import make_mask


def base_config(out, **over):
    cfg = {"command": "certify", "domain": {"builtin": "diamond"},
           "integrand": {"family": "euclidean"}, "boundary": {"family": "g_n", "n": 3},
           "h": 1 / 64, "solver": {"method": "oracle", "cap": 20},
           "certifier": {"deltas": [0.1, 0.25], "monotonicity_points": 4},
           "output_dir": str(out)}
    cfg.update(over)
    return cfg


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


# configuration

@pytest.mark.parametrize("patch, field", [
    ({"h": -0.01}, "h"),
    ({"h": 0}, "h"),
    ({"command": "launch"}, "command"),
    ({"domain": {"builtin": "circle"}}, "domain.builtin"),
    ({"domain": {"vertices": [[0, 0], [1, 1], [2, 2]]}}, "domain"),
    ({"integrand": {"family": "axis_norm", "p": 3}}, "integrand.p"),
    ({"boundary": {"family": "g_n", "n": 1}}, "boundary.n"),
    ({"solver": {"method": "oracle", "cap": -1}}, "solver.cap"),
    ({"solver": {"tau": 1.0, "sigma": 1.0}}, "solver"),
    ({"colour": "blue"}, "<root>.colour"),
])
def test_invalid_configs(tmp_path, patch, field):
    with pytest.raises(ConfigInvalid) as info:
        RunConfig.from_dict(base_config(tmp_path, **patch))
    assert info.value.path == field


def test_invalid_json_and_missing_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigInvalid):
        RunConfig.load(bad)
    with pytest.raises(ConfigInvalid):
        RunConfig.load(tmp_path / "missing.json")


def test_config_round_trip(tmp_path):
    cfg = RunConfig.from_dict(base_config(tmp_path, integrand={"family": "axis_norm",
                                                               "p": "inf"}))
    again = RunConfig.from_json(cfg.to_json())
    assert again.raw == cfg.raw
    assert again.config_hash() == cfg.config_hash()
    other = RunConfig.from_dict(base_config(tmp_path, h=1 / 32))
    assert other.config_hash() != cfg.config_hash()


def test_builtin_families(tmp_path):
    for b in ({"family": "constant", "value": 2},
              {"family": "step"},
              {"family": "g_n", "n": 4, "direction": [1, 1]},
              {"family": "piecewise_linear", "knots": [[0, 0], [2, 1]]}):
        dom = {"builtin": "square"}
        cfg = RunConfig.from_dict(base_config(tmp_path, domain=dom, boundary=b))
        assert cfg.boundary().description["family"] == b["family"]


def test_output_root_override(tmp_path, monkeypatch):
    cfg = RunConfig.from_dict(base_config("rel/out"))
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert cfg.output_dir() == tmp_path / "rel" / "out"


# reporting

def test_canonical_floats():
    assert canonical({"a": 1 / 3, "b": math.inf, "c": [np.float64(2.5)]}) == \
        {"a": 0.333333333333, "b": "inf", "c": [2.5]}


def test_svg_constant_solution_has_no_levels(tmp_path, diamond):
    m = make_mask(diamond, 1 / 32)
    u = grid_function(diamond, m, lambda p: np.full(len(p), 2.0))
    text = render_level_lines(u, [1.0, 2.5], tmp_path / "c.svg").read_text()
    assert 'class="domain"' in text and 'class="level"' not in text


def test_svg_oracle_level_lines_are_vertical(tmp_path, diamond):
    g = GridSpec.covering(diamond, 1 / 128)
    u = chord_oracle(g_n_profile(3), (1, 0), diamond, g, cap=20)
    path = render_level_lines(u, [1.5, 2, 3], tmp_path / "o.svg")
    text = path.read_text()
    assert text.count('class="level"') == 3
    for line in text.splitlines():
        if line.startswith("<polyline points"):
            xs = [float(p.split(",")[0]) for p in line.split('"')[1].split()]
            assert max(xs) - min(xs) < 400 / 128 * 2
    assert render_level_lines(u, [1.5, 2, 3], tmp_path / "o2.svg").read_bytes() == \
        path.read_bytes()


def test_svg_unwritable(tmp_path, diamond):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    m = make_mask(diamond, 1 / 16)
    u = grid_function(diamond, m, lambda p: p[:, 0])
    with pytest.raises(IOFailure):
        render_level_lines(u, [1.0], blocker / "sub" / "l.svg")


# pipeline and command line

def test_certify_oracle_passes(tmp_path):
    path = write_config(tmp_path, base_config(tmp_path / "out"))
    assert cli.main(["certify", "--config", str(path)]) == 0
    out = tmp_path / "out"
    for name in ("report.json", "report.txt", "solution.csv", "levels.svg", "metadata.json"):
        assert (out / name).exists()
    report = json.loads((out / "report.json").read_text())
    keys = [(c["name"], c["level"] if c["level"] is not None else -1) for c in report["checks"]]
    assert keys == sorted(keys, key=lambda k: (k[0], k[1]))
    assert all(c["verdict"] != "fail" for c in report["checks"])
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config_hash"] == RunConfig.load(path).config_hash()


def test_runs_are_byte_identical(tmp_path):
    outs = []
    for k in range(2):
        cfg = base_config(tmp_path / f"out{k}", solver={"method": "primal_dual", "cap": 5,
                                                        "max_iter": 400},
                          h=1 / 32)
        assert cli.main(["certify", "--config", str(write_config(tmp_path, cfg))]) == 0
        outs.append(tmp_path / f"out{k}")
    for name in ("report.json", "report.txt", "solution.csv", "convergence.csv", "levels.svg"):
        a = (outs[0] / name).read_bytes()
        b = (outs[1] / name).read_bytes()
        if name == "report.json":
            a, b = (json.loads(x) for x in (a, b))
            for r in (a, b):
                r["config"].pop("output_dir")
        assert a == b, name


def test_negative_h_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, base_config(tmp_path, h=-1))
    assert cli.main(["certify", "--config", str(path)]) == 2
    assert "h:" in capsys.readouterr().err


def test_unwritable_output_exit_code(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    path = write_config(tmp_path, base_config(blocker / "out", h=1 / 16))
    assert cli.main(["solve", "--config", str(path)]) == 3


def test_pipeline_error_exit_code(tmp_path):
    # the oracle needs graph-type data; piecewise-linear arc data is not
    cfg = base_config(tmp_path / "o", boundary={"family": "piecewise_linear",
                                                "knots": [[0, 0], [2, 1]]})
    assert cli.main(["solve", "--config", str(write_config(tmp_path, cfg))]) == 3


def test_failed_check_sets_exit_code(tmp_path, monkeypatch):
    bad = CertificateReport("forced", {}, 2.0, 1.0, -1.0, 0.0, FAIL)
    monkeypatch.setattr(pipeline, "certify_solution", lambda *a, **k: [bad])
    path = write_config(tmp_path, base_config(tmp_path / "o", h=1 / 16))
    assert cli.main(["certify", "--config", str(path)]) == 1


def test_solve_and_sweep(tmp_path):
    path = write_config(tmp_path, base_config(tmp_path / "s", h=1 / 32))
    assert cli.main(["sweep", "--config", str(path)]) == 0
    rows = (tmp_path / "s" / "sweep.csv").read_text().splitlines()
    assert rows[0] == "t,measure,perimeter,phi_perimeter,trace_measure,glued_perimeter,deficit"
    assert len(rows) == 21
    assert cli.main(["solve", "--config", str(path)]) == 0


def test_example_optimal(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ROOT_ENV, str(tmp_path))
    assert cli.main(["example-optimal", "--n", "3"]) == 0
    table = (tmp_path / "lgcert-out" / "optimal_exponent.csv").read_text().splitlines()
    flags = {}
    for row in table[1:]:
        p, cap, norm, flag = row.split(",")
        flags[float(p)] = flag
    assert flags[2.5] == "stable" and flags[3.5] == "diverging"
    assert cli.main(["example-optimal", "--n", "1"]) == 2
