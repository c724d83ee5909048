import os

import numpy as np
import pytest
import yaml

from bdsvi.cli import run
from bdsvi.scenarios import ScenarioError, load_scenario, make_f, make_g, make_h, make_terminal

SCEN = os.path.join(os.path.dirname(__file__), os.pardir, "scenarios")


def _scn(name):
    return os.path.join(SCEN, name)


# ---------------------------------------------------------------- scenario parsing

def test_load_zero_scenario():
    scn = load_scenario(_scn("zero.yaml"))
    assert scn.name == "zero-penalty-linear"
    assert scn.phi.label == "zero"
    assert scn.grid.n_steps == 100
    assert scn.n_paths == 1000
    assert scn.weight_warning is None


def test_overrides_apply():
    scn = load_scenario(_scn("zero.yaml"), {"steps": 10, "paths": 7, "seed": 5, "eps": 0.5})
    assert scn.grid.n_steps == 10
    assert scn.n_paths == 7
    assert scn.seed == 5
    assert scn.solver.eps == 0.5


def test_weight_warning_set_when_outside_region(tmp_path):
    raw = yaml.safe_load(open(_scn("zero.yaml")))
    raw["constants"]["lam"] = 0.1
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(raw))
    scn = load_scenario(p)
    assert scn.weight_warning is not None


def test_unknown_catalog_name_raises(tmp_path):
    raw = yaml.safe_load(open(_scn("zero.yaml")))
    raw["phi"] = "mystery"
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(raw))
    with pytest.raises((KeyError, ScenarioError)):
        load_scenario(p)


def test_coefficient_builders():
    y = np.ones((4, 1))
    z = np.ones((4, 1, 2))
    f = make_f({"kind": "linear", "a_y": 2.0, "c": 1.0})
    assert np.allclose(f(0.0, None, y, z), 3.0)
    g = make_g({"kind": "constant", "value": -1.0})
    assert np.allclose(g(0.0, None, y), -1.0)
    h = make_h({"kind": "constant", "value": 0.5})
    assert h(0.0, None, y, z).shape == (4, 1, 2)
    chi = make_terminal({"kind": "quadratic_norm"})
    assert np.allclose(chi(np.array([[3.0, 4.0]])), 25.0)
    with pytest.raises(ScenarioError):
        make_f({"kind": "cubic"})


# ---------------------------------------------------------------- commands

def test_solve_zero_scenario(tmp_path):
    out = tmp_path / "o"
    rc = run(["solve", "--scenario", _scn("zero.yaml"), "--out", str(out),
              "--paths", "50", "--quiet"])
    assert rc == 0
    txt = (out / "solve.txt").read_text()
    assert "PASS terminal exactness" in txt
    assert (out / "solve.csv").exists()


def test_prox_check(tmp_path):
    rc = run(["prox-check", "--scenario", _scn("zero.yaml"),
              "--out", str(tmp_path), "--quiet"])
    assert rc == 0
    assert "FAIL" not in (tmp_path / "prox_check.txt").read_text()


def test_compat_check(tmp_path):
    rc = run(["compat-check", "--scenario", _scn("vi_oracle.yaml"),
              "--out", str(tmp_path), "--quiet"])
    assert rc == 0


def test_sde_sim(tmp_path):
    rc = run(["sde-sim", "--scenario", _scn("ball.yaml"), "--out", str(tmp_path),
              "--paths", "50", "--steps", "100", "--quiet"])
    assert rc == 0
    assert "PASS containment" in (tmp_path / "sde_sim.txt").read_text()


def test_field_command(tmp_path):
    rc = run(["field", "--scenario", _scn("field.yaml"), "--out", str(tmp_path),
              "--paths", "30", "--steps", "20", "--quiet"])
    assert rc == 0
    lines = (tmp_path / "field.csv").read_text().splitlines()
    assert lines[0] == "t,x,u,stderr"
    assert len(lines) == 26


def test_report_command(tmp_path):
    rc = run(["report", "--scenario", _scn("vi_oracle.yaml"), "--out", str(tmp_path),
              "--steps", "100", "--quiet"])
    assert rc == 0
    assert "subgradient-inequality audit" in (tmp_path / "report.txt").read_text()


def test_cauchy_command_small(tmp_path):
    rc = run(["cauchy", "--scenario", _scn("cauchy.yaml"), "--out", str(tmp_path),
              "--steps", "2000", "--eps", "1e-1,1e-2,1e-3", "--quiet"])
    assert rc == 0
    assert "PASS slope" in (tmp_path / "cauchy.txt").read_text()


def test_rerun_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(["solve", "--scenario", _scn("zero.yaml"), "--out", str(out),
                    "--paths", "64", "--quiet"]) == 0
    assert (a / "solve.csv").read_bytes() == (b / "solve.csv").read_bytes()


def test_missing_scenario_is_validation_error(tmp_path):
    assert run(["solve", "--scenario", str(tmp_path / "nope.yaml"),
                "--out", str(tmp_path), "--quiet"]) == 2


def test_bad_scenario_is_validation_error(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("phi: mystery\n")
    assert run(["solve", "--scenario", str(p), "--out", str(tmp_path), "--quiet"]) == 2


def test_field_without_domain_is_validation_error(tmp_path):
    assert run(["field", "--scenario", _scn("zero.yaml"),
                "--out", str(tmp_path), "--quiet"]) == 2
