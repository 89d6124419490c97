import json
import subprocess
import sys

import numpy as np
import pytest

from converge_lab.cli import batch, main
from converge_lab.errors import BuildError, ParseError
from converge_lab.integrate import Trajectory
from converge_lab.scenario import comparable, dumps, parse_scenario, resolve, run_scenario

DUFFING = """
name = "duffing"
analyses = ["omega", "cauchy", "l2", "fit", "stability"]
initial = [2.0, 0.0]

[system]
gallery = "duffing_damped"

[integrator]
t_max = 60.0
sample_interval = 0.02
"""

POWER = """
name = "power"
analyses = ["omega", "cauchy", "l2", "fit"]

[system]
gallery = "power_decay"
params = { p = 3 }

[integrator]
t_max = 1000.0
sample_interval = 0.1
"""

INLINE = """
name = "quartic"
seed = 3
analyses = ["fit", "loja"]
initial = [1.0]

[system]
potential = { terms = [[1.0, [4]]] }
order = 1

[integrator]
t_max = 1e6
log_grid = { n = 600 }

[analysis]
loja_point = [0.0]
"""


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_duffing_scenario(tmp_path, capsys):
    path = tmp_path / "duffing.toml"
    path.write_text(DUFFING)
    code, out, _ = run_cli(capsys, "simulate", str(path), "--out", str(tmp_path / "run"))
    assert code == 0
    rep = json.loads(out)
    assert rep["convergence"]["verdict"] == "converged"
    assert np.allclose(rep["convergence"]["limit"], [1.0, 0.0], atol=1e-6)
    kinds = {tuple(np.round(s["point"], 6)): s["class"] for s in rep["stability"]}
    assert kinds[(1.0, 0.0)] == "asymptotically_stable"
    assert (tmp_path / "run.csv").exists() and (tmp_path / "run.json").exists()
    tr = Trajectory.from_csv(tmp_path / "run.csv")
    assert tr.states.shape[1] == 2


def test_power_decay_fit(tmp_path, capsys):
    path = tmp_path / "power.toml"
    path.write_text(POWER)
    code, out, _ = run_cli(capsys, "simulate", str(path))
    assert code == 0
    fit = json.loads(out)["convergence"]["fitted"]
    assert fit["class"] == "power"
    assert fit["rate"] == pytest.approx(0.5, rel=0.05)


def test_gallery_palis_radial(capsys):
    code, out, _ = run_cli(capsys, "gallery", "run", "palis_demelo", "--param", "k=1",
                           "--param", "mode=radial", "--analyses", "omega,cauchy")
    assert code == 0
    conv = json.loads(out)["convergence"]
    assert conv["verdict"] == "non_convergent"
    assert conv["omega"]["kind"] == "closed_curve"
    assert conv["omega"]["mean_radius"] == pytest.approx(1.0, abs=0.02)


def test_gallery_list(capsys):
    code, out, _ = run_cli(capsys, "gallery", "list")
    assert code == 0
    names = [line.split("\t")[0] for line in out.strip().splitlines()]
    assert "duffing_damped" in names and "palis_demelo" in names


def test_inline_loja_and_rates(tmp_path, capsys):
    path = tmp_path / "q.toml"
    path.write_text(INLINE)
    code, out, _ = run_cli(capsys, "loja", str(path))
    assert code == 0
    rep = json.loads(out)
    assert rep["lojasiewicz"]["theta"] == pytest.approx(0.25, abs=0.02)
    assert rep["lojasiewicz"]["seed"] == 3


def test_overrides(tmp_path, capsys):
    path = tmp_path / "duffing.toml"
    path.write_text(DUFFING)
    code, out, _ = run_cli(capsys, "simulate", str(path), "--t-max", "5", "--tol", "1e-6")
    rep = json.loads(out)
    assert rep["integration"]["t_end"] == pytest.approx(5.0)
    assert rep["scenario"]["integrator"]["rel_tol"] == 1e-6


def test_parse_error_has_position(tmp_path, capsys):
    path = tmp_path / "bad.toml"
    path.write_text('name = "x"\n[system\ngallery = "harmonic"\n')
    code, _, err = run_cli(capsys, "simulate", str(path))
    assert code == 2
    assert "line 2" in err


def test_schema_errors():
    with pytest.raises(ParseError):
        parse_scenario('name = "x"\nbogus = 1\n[system]\ngallery = "harmonic"\n')
    with pytest.raises(ParseError):
        parse_scenario('name = "x"\nanalyses = ["loja"]\n[system]\ngallery = "harmonic"\n')
    with pytest.raises(ParseError):
        parse_scenario('name = "x"\nanalyses = ["dance"]\n[system]\ngallery = "harmonic"\n')


def test_build_errors(capsys):
    with pytest.raises(BuildError):
        resolve(parse_scenario('name = "x"\n[system]\ngallery = "nope"\n'))
    with pytest.raises(BuildError):
        resolve(parse_scenario('name = "x"\n[system]\ngallery = "power_decay"\nparams = { q = 2 }\n'))
    code, _, err = run_cli(capsys, "gallery", "run", "nope")
    assert code == 2 and "nope" in err


def test_analyze_csv(tmp_path, capsys):
    sc = parse_scenario(DUFFING)
    run_scenario(sc, str(tmp_path / "d"))
    code, out, _ = run_cli(capsys, "analyze", str(tmp_path / "d.csv"), "--limit", "1", "0",
                           "--out", str(tmp_path / "a"))
    assert code == 0
    rep = json.loads(out)
    assert rep["verdict"] == "converged"
    assert rep["fitted"]["class"] == "exponential"
    assert json.loads((tmp_path / "a.json").read_text()) == rep


def test_report_round_trip(tmp_path):
    rep = run_scenario(parse_scenario(DUFFING), str(tmp_path / "r"))
    reloaded = json.loads((tmp_path / "r.json").read_text())
    assert reloaded == json.loads(dumps(rep))
    assert json.loads(dumps(reloaded)) == reloaded


def test_run_is_deterministic():
    a = run_scenario(parse_scenario(INLINE))
    b = run_scenario(parse_scenario(INLINE))
    assert comparable(a) == comparable(b)


def test_batch_empty_directory(tmp_path, capsys):
    code, out, _ = run_cli(capsys, "batch", str(tmp_path))
    assert code == 0
    assert json.loads(out) == {"failures": 0, "n": 0, "scenarios": []}


def test_batch_isolates_failures(tmp_path, capsys):
    (tmp_path / "good.toml").write_text(POWER)
    (tmp_path / "bad.toml").write_text("name = \n")
    code, out, _ = run_cli(capsys, "batch", str(tmp_path), "--serial")
    assert code != 0
    summary = json.loads(out)
    assert summary["n"] == 2 and summary["failures"] == 1
    bad = [s for s in summary["scenarios"] if not s["ok"]][0]
    assert "ParseError" in bad["error"]


def test_batch_parallel_matches_serial(tmp_path, monkeypatch):
    src = tmp_path / "in"
    src.mkdir()
    (src / "a.toml").write_text(DUFFING)
    (src / "b.toml").write_text(POWER)
    (src / "c.toml").write_text(INLINE)
    monkeypatch.setenv("CONVERGE_LAB_THREADS", "3")
    par = batch(src, tmp_path / "p", parallel=True)
    ser = batch(src, tmp_path / "s", parallel=False)
    assert par["failures"] == 0
    assert json.loads(dumps(par)) == json.loads(dumps(ser))


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "converge_lab.cli", "gallery", "list"],
                         capture_output=True, text=True, check=True)
    assert "harmonic" in out.stdout
