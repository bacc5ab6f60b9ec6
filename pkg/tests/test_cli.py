import json
import subprocess
import sys

import numpy as np
import pytest

from mfmarket.analytic import closed_form_density
from mfmarket.cli import main, parse_grid
from mfmarket.config import ConfigError

SMALL_INI = """
[model]
n_agents = 800
mu = 100
tau = 400
t_steps = 6000
seed = 4

[experiment]
realizations = 1
analyses = acf, tail_estimate
"""


@pytest.fixture
def ini(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(SMALL_INI)
    return path


def test_run(ini, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", str(ini), "--out", str(out)]) == 0
    assert (out / "acf.csv").exists() and (out / "tail_estimates.csv").exists()
    assert "alpha" in capsys.readouterr().out


def test_seed_override(ini, tmp_path):
    out = tmp_path / "out"
    assert main(["run", str(ini), "--out", str(out), "--seed", "77", "--quiet"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["model"]["seed"] == 77


def test_validate(ini, capsys):
    assert main(["validate", str(ini)]) == 0
    assert "ok" in capsys.readouterr().out


def test_invalid_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nmu_lo = 200\nmu_hi = 10\n")
    assert main(["validate", str(bad)]) == 1
    assert "mu_lo" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.ini")]) == 1


def test_usage_error_exit_1():
    assert main(["run"]) == 1
    assert main(["figure", "fig9"]) == 1


def test_runtime_failure_exit_2(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    ini = tmp_path / "ok.ini"
    ini.write_text(SMALL_INI)
    # output directory below a regular file cannot be created
    assert main(["run", str(ini), "--out", str(blocker / "sub"), "--quiet"]) == 2
    assert "error" in capsys.readouterr().err


def test_analytic_stdout(capsys):
    assert main(["analytic", "--zeta", "1.5", "--grid", "0:10:11", "--n-max", "1000"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "r,closed_form,mixture"
    assert len(lines) == 12
    r, cf, _ = (float(v) for v in lines[3].split(","))
    assert r == 2.0 and cf == closed_form_density(2.0, 1.5)


def test_analytic_out(tmp_path):
    assert main(["analytic", "--zeta", "1.2", "--grid", "log:0.1:50:20", "--out", str(tmp_path), "--quiet"]) == 0
    meta = json.loads((tmp_path / "manifest.json").read_text())
    assert meta["predicted_alpha"] == 2.4
    assert len((tmp_path / "analytic.csv").read_text().splitlines()) == 21


@pytest.mark.parametrize("argv", [["analytic", "--zeta", "-1", "--grid", "0:1:3"],
                                  ["analytic", "--zeta", "1", "--grid", "0:1"],
                                  ["analytic", "--zeta", "1", "--grid", "log:0:1:3"]])
def test_analytic_invalid(argv):
    assert main(argv) == 1


def test_parse_grid():
    np.testing.assert_allclose(parse_grid("0:1:3"), [0, 0.5, 1])
    np.testing.assert_allclose(parse_grid("log:1:100:3"), [1, 10, 100])
    with pytest.raises(ConfigError):
        parse_grid("1:2:0")


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "mfmarket", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "analytic" in proc.stdout
