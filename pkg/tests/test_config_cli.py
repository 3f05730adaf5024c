import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tvfluid import cli
from tvfluid.audit import BUDGET_COLUMNS
from tvfluid.config import dump_config, parse_config
from tvfluid.constitutive import Regime
from tvfluid.errors import ConfigError
from tvfluid.grid import read_snapshot
from tvfluid.solver import CflDt, FixedDt


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_budget(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(x) for x in r] for r in rows[1:]])


# -- config parsing ------------------------------------------------------------

def test_parse_defaults_and_aliases():
    cfg = parse_config("n = 16\nregime = P3\nT = 0.5  # comment\nmaterial.g = 'saturating'\n")
    assert cfg["grid.n"] == 16 and cfg["solver.T"] == 0.5
    assert cfg["solver.r"] == 0.1
    model = cfg.model()
    assert model.regime is Regime.P3 and model.g.name == "saturating"
    assert isinstance(cfg.solver_config().dt_policy, CflDt)


def test_parse_fixed_step_and_function_parameters():
    cfg = parse_config("solver.dt_policy = fixed\nsolver.dt = 1e-4\nmaterial.kappa = affine\n"
                       "material.kappa.c0 = 1.5\nmaterial.kappa.c1 = 0.25\n")
    assert cfg.solver_config().dt_policy == FixedDt(1e-4)
    k = cfg.model().kappa
    assert k(np.array([2.0]))[0] == pytest.approx(2.0)
    assert "material.kappa.c0 = 1.5" in dump_config(cfg)


@pytest.mark.parametrize("text,key,fragment", [
    ("solver.r = 1.5", "solver.r", "(0, 1)"),
    ("grid.n = 7", "grid.n", "even integer"),
    ("grid.bc = sphere", "grid.bc", "'periodic' or 'walls'"),
    ("material.regime = P4", "material.regime", "P1, P2, P3"),
    ("bogus = 1", "bogus", "unknown key"),
    ("solver.dt = 0.1", "solver.dt", "dt_policy"),
    ("material.g = cubic", "material.g", "must be one of"),
    ("grid.n = 16\ngrid.n = 32", "grid.n", "duplicate"),
    ("output.snapshots = maybe", "output.snapshots", "true or false"),
])
def test_parse_errors_name_key_and_range(text, key, fragment):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key
    assert f"key '{key}'" in str(info.value) and fragment in str(info.value)
    assert info.value.line == text.count("\n") + 1


def test_parse_error_without_equals_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("grid.n = 16\n\njust words\n")
    assert info.value.line == 3


def test_fixed_policy_needs_dt():
    with pytest.raises(ConfigError):
        parse_config("solver.dt_policy = fixed").solver_config()


def test_amplitude_rejected_for_stationary():
    with pytest.raises(ConfigError):
        parse_config("init.preset = stationary\ninit.amplitude = 0.3").init_params()


# -- run ----------------------------------------------------------------------

BASE = "grid.n = 16\noutput.stride = 10\n"


def test_bad_r_exits_with_config_error(tmp_path, caplog):
    path = write_cfg(tmp_path, BASE + "solver.r = 1.5\n")
    assert cli.main(["run", path]) == cli.EXIT_CONFIG
    msg = caplog.text
    assert "solver.r" in msg and "(0, 1)" in msg


def test_missing_config_file(tmp_path):
    assert cli.main(["-q", "run", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG


def test_stationary_run_rows_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("TVS_OUT_DIR", str(tmp_path / "out"))
    path = write_cfg(tmp_path, BASE + "solver.dt_policy = fixed\nsolver.dt = 1e-3\nsolver.T = 0.1\n"
                     "output.pgm = true\n")
    assert cli.main(["-q", "run", path]) == cli.EXIT_OK
    header, rows = read_budget(tmp_path / "out" / "budget.csv")
    assert tuple(header) == BUDGET_COLUMNS
    assert rows.shape[0] == 11
    assert np.max(np.abs(rows[:, 1:] - rows[0, 1:])) <= 1e-12
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["status"] == "ok" and summary["steps"] == 100
    assert summary["positivity"] is True
    kind, n, t, vals = read_snapshot(tmp_path / "out" / "snapshots" / "theta_000100.tvs")
    assert (kind, n) == ("theta", 16) and t == pytest.approx(0.1)
    assert np.all(vals == 1.0)
    assert (tmp_path / "out" / "snapshots" / "theta_000000.pgm").exists()


def test_pure_diffusion_conserves_heat(tmp_path, monkeypatch):
    monkeypatch.setenv("TVS_OUT_DIR", str(tmp_path / "out"))
    path = write_cfg(tmp_path, BASE + "init.preset = pure_diffusion\nsolver.T = 0.02\n"
                     "output.snapshots = false\n")
    assert cli.main(["-q", "run", path]) == cli.EXIT_OK
    header, rows = read_budget(tmp_path / "out" / "budget.csv")
    col = rows[:, header.index("L1_theta")]
    assert np.max(np.abs(col - col[0])) <= 1e-12
    assert rows[-1, 0] == pytest.approx(0.02)
    assert np.all(rows[:, header.index("P_entropy")] >= -1e-12)
    assert not (tmp_path / "out" / "snapshots").exists()


def test_runs_are_deterministic(tmp_path, monkeypatch):
    text = BASE + "init.preset = random_smooth\ninit.seed = 7\nsolver.T = 0.005\noutput.snapshots = false\n"
    path = write_cfg(tmp_path, text)
    outs = []
    for k in range(2):
        monkeypatch.setenv("TVS_OUT_DIR", str(tmp_path / f"out{k}"))
        assert cli.main(["-q", "run", path]) == cli.EXIT_OK
        outs.append((tmp_path / f"out{k}" / "budget.csv").read_bytes())
    assert outs[0] == outs[1]


def test_output_dir_from_config(tmp_path, monkeypatch):
    monkeypatch.delenv("TVS_OUT_DIR", raising=False)
    out = tmp_path / "from_cfg"
    path = write_cfg(tmp_path, BASE + f"output.dir = {out}\nsolver.T = 0.001\noutput.snapshots = false\n")
    assert cli.main(["-q", "run", path]) == cli.EXIT_OK
    assert (out / "budget.csv").exists()


def test_positivity_loss_exit_code(tmp_path, monkeypatch, caplog):
    monkeypatch.setenv("TVS_OUT_DIR", str(tmp_path / "out"))
    # 1.8x the stability bound is accepted but makes the explicit scheme overshoot
    path = write_cfg(tmp_path, BASE + "init.preset = wide_theta\nsolver.dt_policy = fixed\nsolver.dt = 1.8e-3\n"
                     "solver.T = 0.5\noutput.snapshots = false\n")
    assert cli.main(["-q", "run", path]) == cli.EXIT_POSITIVITY
    assert "positivity" in caplog.text
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["status"].startswith("failed")


def test_cfl_violation_is_a_config_error(tmp_path, monkeypatch, caplog):
    monkeypatch.setenv("TVS_OUT_DIR", str(tmp_path / "out"))
    path = write_cfg(tmp_path, BASE + "solver.dt_policy = fixed\nsolver.dt = 0.05\noutput.snapshots = false\n")
    assert cli.main(["-q", "run", path]) == cli.EXIT_CONFIG
    assert "stability bound" in caplog.text


def test_theta_path_rejected_for_p3(tmp_path, monkeypatch):
    monkeypatch.setenv("TVS_OUT_DIR", str(tmp_path / "out"))
    path = write_cfg(tmp_path, BASE + "material.regime = P3\nsolver.temperature_path = theta\n")
    assert cli.main(["-q", "run", path]) == cli.EXIT_CONFIG


# -- studies ------------------------------------------------------------------

def test_validate_material_exit_codes(tmp_path, capsys):
    ok = write_cfg(tmp_path, "material.regime = P3\nvalidate.n_samples = 200\n", "ok.cfg")
    assert cli.main(["-q", "validate-material", ok]) == cli.EXIT_OK
    assert "regime P3" in capsys.readouterr().out
    bad = write_cfg(tmp_path, "material.regime = P3\nmaterial.g = exponential\nvalidate.n_samples = 200\n",
                    "bad.cfg")
    assert cli.main(["-q", "validate-material", bad]) == cli.EXIT_THRESHOLD
    assert "g_concave" in capsys.readouterr().out


def test_zero_amplitude_mms(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("TVS_OUT_DIR", str(tmp_path / "out"))
    path = write_cfg(tmp_path, "mms.a_v = 0\nmms.a_theta = 0\nmms.a_F = 0\nmms.grids = 8, 16, 32\n"
                     "mms.T = 0.005\n")
    assert cli.main(["-q", "mms", path]) == cli.EXIT_OK
    lines = (tmp_path / "out" / "mms.csv").read_text().splitlines()
    assert lines[0].startswith("n,err_v")
    assert lines[-1] == "32,0.0,0.0,0.0,exact,exact,exact"
    assert "exact" in capsys.readouterr().out


def test_mms_needs_periodic_grid(tmp_path):
    path = write_cfg(tmp_path, "grid.bc = walls\n")
    assert cli.main(["-q", "mms", path]) == cli.EXIT_CONFIG


def test_galerkin_mismatched_models(tmp_path, monkeypatch):
    monkeypatch.setenv("TVS_OUT_DIR", str(tmp_path / "out"))
    path = write_cfg(tmp_path, "init.preset = lowmode\ngalerkin.material.nu = constant\n"
                     "galerkin.material.nu.value = 2.0\n")
    assert cli.main(["-q", "galerkin-compare", path]) == cli.EXIT_CONFIG


def test_galerkin_needs_lowmode(tmp_path):
    path = write_cfg(tmp_path, "init.preset = shear\n")
    assert cli.main(["-q", "galerkin-compare", path]) == cli.EXIT_CONFIG


def test_galerkin_compare_small(tmp_path, monkeypatch):
    monkeypatch.setenv("TVS_OUT_DIR", str(tmp_path / "out"))
    path = write_cfg(tmp_path, "grid.n = 32\ninit.preset = lowmode\ngalerkin.n_flow = 6\ngalerkin.m_temp = 6\n"
                     "galerkin.T = 0.01\ngalerkin.outputs = 2\n")
    assert cli.main(["-q", "galerkin-compare", path]) == cli.EXIT_OK
    lines = (tmp_path / "out" / "galerkin.csv").read_text().splitlines()
    assert lines[0] == "t,disc_v,disc_F,disc_theta"
    assert len(lines) == 4


def test_module_entry_point(tmp_path):
    path = write_cfg(tmp_path, "solver.r = 2\n")
    proc = subprocess.run([sys.executable, "-m", "tvfluid", "-q", "run", path], capture_output=True, text=True)
    assert proc.returncode == cli.EXIT_CONFIG
    assert "solver.r" in proc.stderr
