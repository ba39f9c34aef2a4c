import csv
import json

import pytest

from bosecool.cli import main
from bosecool.experiments import ConfigError, RunConfig, grid_points, load_config, run_sweep

SMALL = ["--set", "N=2", "--set", "L_max=6"]


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def read_json(path):
    return json.loads(path.read_text())


def test_check_algebra_exit_codes(tmp_path):
    assert run(tmp_path, "check-algebra") == 0
    assert read_json(tmp_path / "algebra.json")["ok"]
    assert run(tmp_path, "check-algebra", "--set", "N=1") == 0
    assert run(tmp_path, "check-algebra", "--set", "L_max=2") == 1


def test_vacua_command(tmp_path):
    assert run(tmp_path, "vacua", "--set", "N=6", "--set", "L_max=6") == 0
    table = read_json(tmp_path / "vacua.json")
    assert [table["counts"][str(l)]["n"] for l in range(7)] == [1, 0, 1, 1, 2, 2, 4]
    checks = table["explicit_vacuum_checks"]
    assert checks["2"]["closed_form_in_kernel"] and checks["5"]["recurrence_in_kernel"]
    assert run(tmp_path, "vacua", *SMALL) == 0
    table = read_json(tmp_path / "vacua.json")
    assert table["dim"] == 16 and max(v["l"] for v in table["vacua"]) == 6


def test_rates_command(tmp_path):
    assert run(tmp_path, "rates", "--set", "gamma_down_target=2.0") == 0
    r = read_json(tmp_path / "rates.json")
    assert r["gamma_down"] == pytest.approx(2.0)
    assert r["gamma_up_over_down"] == pytest.approx(0.5)


def test_config_errors(tmp_path):
    assert run(tmp_path, "rates", "--set", "bogus=1") == 1
    assert run(tmp_path, "rates", "--set", "beta_mu=0.5") == 1
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"N": 2, "etaa": 0.1}))
    assert main(["rates", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"terms": ["L0", "L3"]})


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"N": 2, "L_max": 6, "beta_hw": "inf", "initial_state": {"vacuum": "0.0.1"}}))
    c = load_config(cfg, ["eta=0.05", "terms=[\"L0\"]"])
    assert c.N == 2 and c.eta == 0.05 and c.terms == ["L0"] and c.beta_hw == float("inf")
    assert RunConfig.from_dict(c.to_dict()) == c


def test_evolve_outputs_and_reproducibility(tmp_path):
    args = ["evolve", *SMALL, "--set", "t_final=2", "--set", "max_leak=null"]
    assert run(tmp_path / "a", *args) == 0
    assert run(tmp_path / "b", *args) == 0
    for name in ("trajectory.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    with (tmp_path / "a" / "trajectory.csv").open() as fh:
        header = next(csv.reader(fh))
    assert header[:4] == ["t", "trace_drift", "leak_top2", "n_0.0.1"]
    assert "r_0.0.1__2.1.1_re" in header


def test_evolve_json_format(tmp_path):
    assert run(tmp_path, "evolve", *SMALL, "--set", "t_final=1", "--set", "max_leak=null",
               "--set", "format=\"json\"") == 0
    data = read_json(tmp_path / "trajectory.json")
    assert data["columns"][0] == "t" and len(data["rows"][0]) == len(data["columns"])


def test_numerical_failure_exit_code(tmp_path):
    # default leakage limit is far below the thermal tail at beta = ln 2
    code = run(tmp_path, "evolve", *SMALL, "--set", "t_final=5",
               "--set", "initial_state={\"occupations\": [0, 2]}")
    assert code == 2
    assert read_json(tmp_path / "summary.json")["status"] == "failed"


def test_thermal_initial_state_is_stationary(tmp_path):
    assert run(tmp_path, "evolve", *SMALL, "--set", "t_final=1", "--set", "max_leak=null",
               "--set", "initial_state={\"thermal\": null}") == 0
    s = read_json(tmp_path / "summary.json")
    assert s["initial_derivative_norm"] < 1e-8


def test_coarse_command(tmp_path):
    assert run(tmp_path, "coarse", *SMALL, "--set", "N=3") == 0
    s = read_json(tmp_path / "summary.json")
    assert s["max_mass_drift"] < 1e-9
    stat = read_json(tmp_path / "stationary.json")
    assert "beta_e_prime" in stat and (tmp_path / "coarse_trajectory.csv").exists()


def test_compare_invariant_exit_code(tmp_path):
    base = ["compare", *SMALL, "--set", "max_leak=null", "--set", "t_final=20"]
    assert run(tmp_path, *base) == 0
    assert (tmp_path / "deviation.csv").exists()
    assert run(tmp_path, *base, "--set", "compare_tol=1e-12") == 3


def test_sweep_grid_and_determinism(tmp_path, monkeypatch):
    cfg = RunConfig(N=2, L_max=6, max_leak=None, grid={"beta_mu": [0.0, -0.5, -1.0], "N": [2, 3]})
    assert grid_points(cfg)[:2] == [{"beta_mu": 0.0, "N": 2}, {"beta_mu": 0.0, "N": 3}]
    serial = run_sweep(cfg, workers=1)
    parallel = run_sweep(cfg, workers=3)
    assert serial == parallel
    for row in serial:
        assert row["status"] == "ok"
        assert row["ladder_ratio"] == pytest.approx(row["ladder_ratio_expected"], rel=1e-8)
    monkeypatch.setenv("BOSECOOL_WORKERS", "2")
    assert run(tmp_path, "sweep", *SMALL, "--set", "grid={\"eta\": [0.05, 0.1]}") == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert [r["eta"] for r in rows] == ["0.050000000000000003", "0.10000000000000001"]


def test_sweep_records_failures(tmp_path):
    cfg = RunConfig(N=2, L_max=6, grid={"beta_mu": [0.0, 5.0]})
    rows = run_sweep(cfg, workers=1)
    assert rows[0]["status"] == "ok" and rows[1]["status"].startswith("error")


def test_sweep_rates_linear_in_N():
    cfg = RunConfig(L_max=4, gamma_down_target=None, grid={"N": [2, 3, 4]})
    rows = run_sweep(cfg, workers=1)
    per_atom = [r["gamma_down"] / r["N"] for r in rows]
    assert per_atom == pytest.approx([per_atom[0]] * 3, rel=1e-14)
