import json
import subprocess
import sys

import pytest

from clonedyn.cli import main

TINY_CONTINUUM = """\
[model]
variant = "continuum"
p = 1.0
d = 0.2
K = 0.01

[profile]
kind = "single-bump"
peak = 0.9
floor = 0.55
center = 0.5
width = 0.05

[grid]
n_nodes = 101

[initial]
u1 = "1000 - 500*x"
u2 = "1000*x^2"

[integrator]
dt = 0.02
t_end = 2.0
snapshot_times = [0.0, 2.0]
record_every = 5

[output]
observers = ["V", "flat_dist", "conc_frac"]
observer_every = 4
plots = true
"""

TINY_TWO_COMP = """\
[model]
variant = "two-compartment"
p = 2.0
d = 1.0
K = 1.0

[profile]
kind = "constant"
value = 0.75

[initial]
v1 = 1.0
v2 = 0.1

[integrator]
dt = 0.01
t_end = 10.0
record_every = 10

[output]
observers = ["V"]
"""


def _write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ----------------------------------------------------------------------- run

def test_run_continuum_outputs(tmp_path, capsys):
    cfg = _write(tmp_path, TINY_CONTINUUM)
    out = tmp_path / "out"
    code = main(["run", "--config", cfg, "--out", str(out)])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "final masses" in stdout
    for name in ("trajectory.csv", "summary.json", "snapshot_t0.csv",
                 "snapshot_t2.csv", "masses.svg", "lyapunov.svg",
                 "density.svg"):
        assert (out / name).exists(), name
    summary = json.loads((out / "summary.json").read_text())
    assert summary["variant"] == "continuum"
    assert summary["bounds"]["passed"] is True
    assert summary["equilibrium"]["rho2_bar"] == 80.0
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,rho1,rho2,s,V,flat_dist,conc_frac"


def test_run_is_byte_deterministic(tmp_path):
    cfg = _write(tmp_path, TINY_CONTINUUM)
    outs = []
    for tag in ("o1", "o2"):
        assert main(["run", "--config", cfg, "--out",
                     str(tmp_path / tag), "--no-plots"]) == 0
        outs.append((tmp_path / tag / "trajectory.csv").read_bytes())
    assert outs[0] == outs[1]


def test_run_two_compartment(tmp_path, capsys):
    cfg = _write(tmp_path, TINY_TWO_COMP)
    out = tmp_path / "tc"
    assert main(["run", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["equilibrium"]["rho1_bar"] == 0.25
    assert summary["lyapunov"]["V_final"] < summary["lyapunov"]["V0"]


def test_run_missing_config_exits_2(capsys):
    assert main(["run", "--config", "/nonexistent/x.toml"]) == 2
    assert "configuration error" in capsys.readouterr().err


def test_run_bad_field_exits_2(tmp_path, capsys):
    bad = TINY_TWO_COMP.replace('value = 0.75', 'value = 0.4')
    assert main(["run", "--config", _write(tmp_path, bad)]) == 2
    assert "profile" in capsys.readouterr().err


def test_run_blowup_exits_3(tmp_path, capsys):
    bad = TINY_TWO_COMP.replace("dt = 0.01", "dt = 50.0") \
                       .replace("t_end = 10.0", "t_end = 100000.0")
    assert main(["run", "--config", _write(tmp_path, bad)]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_run_flat_dist_rejected_for_two_peaks(tmp_path, capsys):
    bad = TINY_CONTINUUM.replace(
        'kind = "single-bump"\npeak = 0.9\nfloor = 0.55\ncenter = 0.5\n'
        'width = 0.05',
        'kind = "two-bump"\npeak = 0.9\nfloor = 0.55\n'
        'centers = [0.3, 0.7]\nwidths = [0.05, 0.05]')
    assert main(["run", "--config", _write(tmp_path, bad)]) == 2
    assert "flat_dist" in capsys.readouterr().err


def test_run_preset_resolves(tmp_path):
    # presets parse and build; integrating them is covered by acceptance
    from clonedyn import parse_config, preset
    for name in ("fig1", "fig2"):
        cfg = parse_config(preset(name))
        assert cfg.grid.n_nodes == 201
        assert cfg.integrator.t_end == 200.0


# -------------------------------------------------------------------- metric

def test_metric_dirac_files(tmp_path, capsys):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("position,weight\n0,1\n")
    b.write_text("position,weight\n0.5,1\n")
    assert main(["metric", str(a), str(b)]) == 0
    out = capsys.readouterr().out
    assert "flat: 0.5" in out
    assert "wasserstein1: 0.5" in out
    assert "flat_upper_bound: 0.5" in out


def test_metric_mass_mismatch_reports_na(tmp_path, capsys):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    a.write_text("position,weight\n0,2\n")
    b.write_text("position,weight\n0.5,1\n")
    assert main(["metric", str(a), str(b)]) == 0
    out = capsys.readouterr().out
    assert "wasserstein1: n/a" in out
    assert "flat: 1.5" in out  # |2-1| mass gap + 1 * 0.5 transport


def test_metric_malformed_file_exits_2(tmp_path, capsys):
    a = tmp_path / "a.csv"
    a.write_text("position,weight\n0,1,9\n")
    b = tmp_path / "b.csv"
    b.write_text("position,weight\n0,1\n")
    assert main(["metric", str(a), str(b)]) == 2


# -------------------------------------------------------------------- verify

def test_verify_small_suites(capsys):
    code = main(["verify", "metrics", "--seed", "5", "--cases", "20"])
    assert code == 0
    assert "metrics: pass" in capsys.readouterr().out


def test_verify_unknown_suite_exits_2(capsys):
    assert main(["verify", "bogus"]) == 2


def test_verify_list(capsys):
    assert main(["verify", "--list"]) == 0
    out = capsys.readouterr().out
    for name in ("metrics", "lyapunov", "bounds", "reduction", "envelopes"):
        assert name in out


# --------------------------------------------------------------- equilibrium

def test_equilibrium_values(capsys):
    assert main(["equilibrium", "--a-bar", "0.9", "--p", "1", "--d", "0.2",
                 "--K", "0.01"]) == 0
    out = capsys.readouterr().out
    assert "rho1_bar: 16" in out
    assert "rho2_bar: 80" in out


def test_equilibrium_json(capsys):
    assert main(["equilibrium", "--a-bar", "0.75", "--p", "2", "--d", "1",
                 "--K", "1", "--json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["rho1_bar"] == 0.25
    assert data["rho2_bar"] == 0.5


def test_equilibrium_subcritical_exits_3(capsys):
    assert main(["equilibrium", "--a-bar", "0.4", "--p", "1", "--d", "0.2",
                 "--K", "0.01"]) == 3


# --------------------------------------------------------------------- sweep

def test_sweep_two_compartment(tmp_path, capsys):
    cfg = _write(tmp_path, TINY_TWO_COMP)
    out = tmp_path / "sw"
    code = main(["sweep", "--config", cfg, "--param", "model.p",
                 "--values", "1,2,4", "--out", str(out)])
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0] == "# param: model.p"
    assert lines[1].startswith("value,rho1,rho2")
    assert len(lines) == 5
    assert (out / "sweep.svg").exists()


def test_sweep_without_observers_still_reports_equilibrium(tmp_path, capsys):
    cfg = _write(tmp_path, TINY_TWO_COMP.replace('observers = ["V"]', ""))
    out = tmp_path / "sw"
    code = main(["sweep", "--config", cfg, "--param", "model.p",
                 "--values", "1,4", "--out", str(out)])
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    for line in lines[2:]:
        value, _, rho2, _, rho1_bar, rho2_bar = map(float, line.split(","))
        # constant a=0.75, K=1, d=1: rho2_bar = 0.5, rho1_bar = d*rho2_bar/p
        assert rho2_bar == pytest.approx(0.5)
        assert rho1_bar == pytest.approx(0.5 / value)


def test_sweep_bad_values_exits_2(tmp_path, capsys):
    cfg = _write(tmp_path, TINY_TWO_COMP)
    assert main(["sweep", "--config", cfg, "--param", "model.p",
                 "--values", "1,zap"]) == 2


# ------------------------------------------------------------- entry point

def test_console_script_installed():
    proc = subprocess.run([sys.executable, "-m", "clonedyn.cli",
                           "equilibrium", "--a-bar", "0.9", "--p", "1",
                           "--d", "0.2", "--K", "0.01"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "rho2_bar: 80" in proc.stdout
