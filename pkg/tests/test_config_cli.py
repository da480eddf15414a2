import csv
import json

import numpy as np
import pytest

from koopcause import cli
from koopcause import config as kcfg
from koopcause.io import read_trajectory_bin, read_trajectory_csv

ROSSLER_PART = {"components": {"omega1": [0, 1, 2], "omega2": [3, 4, 5]}, "effect": "omega1", "cause": "omega2"}


def _rossler(kind, **analysis):
    return {
        "experiment_id": "t",
        "seed": 3,
        "system": {"kind": "rossler", "c1": 0.5},
        "integration": {"dt": 0.01, "n_steps": 600, "burn_in": 200},
        "partition": ROSSLER_PART,
        "dictionary": {"m_features": 16},
        "analysis": {"kind": kind, **analysis},
    }


def _l96(kind, **analysis):
    return {
        "experiment_id": "t",
        "system": {"kind": "lorenz96", "n_sites": 8, "forcing": 8.0},
        "integration": {"dt": 0.01, "n_steps": 400, "burn_in": 100},
        "dictionary": {"m_features": 8},
        "analysis": {"kind": kind, **analysis},
    }


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.mark.parametrize("name", kcfg.recipe_names())
def test_bundled_recipes_are_valid(name):
    assert kcfg.validate_config(kcfg.load_recipe(name)) == []


def test_recipes_cover_every_figure():
    names = set(kcfg.recipe_names())
    for fig in ("rossler-fig1", "rossler-fig3", "rossler-fig4", "l96-fig5", "l96-fig6", "l96-fig8", "rossler-fig9"):
        assert fig in names


def test_shift_beyond_trajectory_is_named():
    v = kcfg.validate_config(_rossler("measure", shift=600))
    assert len(v) == 1 and v[0].startswith("/analysis/shift:")


def test_overlapping_partition_is_named():
    cfg = _rossler("measure", shift=5)
    cfg["partition"] = {**ROSSLER_PART, "components": {"omega1": [0, 1, 2], "omega2": [2, 3, 4, 5]}}
    v = kcfg.validate_config(cfg)
    assert any(line.startswith("/partition/components:") for line in v)


def test_all_violations_enumerated():
    cfg = _rossler("measure", shift=5)
    cfg["bogus"] = 1
    cfg["integration"]["dt"] = -1
    cfg["dictionary"]["m_features"] = 0
    v = kcfg.validate_config(cfg)
    assert len(v) == 3
    assert any("bogus" in line for line in v)
    assert any(line.startswith("/integration/dt") for line in v)
    assert any(line.startswith("/dictionary/m_features") for line in v)


def test_cross_field_checks_enumerated():
    cfg = _rossler("sweep", shifts=[50, 10, 900])
    cfg["partition"] = {**ROSSLER_PART, "cause": "omega1"}
    cfg["dictionary"]["bandwidth"] = [1.0, 2.0]
    v = kcfg.validate_config(cfg)
    assert any("effect and cause must differ" in line for line in v)
    assert any(line.startswith("/analysis/shifts/2:") for line in v)
    assert any("sorted" in line for line in v)
    assert any(line.startswith("/dictionary/bandwidth") for line in v)


def test_system_analysis_mismatch():
    v = kcfg.validate_config(_l96("sweep", shifts=[5]))
    assert any("requires system kind 'rossler'" in line for line in v)
    v = kcfg.validate_config(_l96("l96-cumulative", shifts=[5], target=8, delta_ns=[0, 3]))
    assert any(line.startswith("/analysis/target") for line in v)
    assert any(line.startswith("/analysis/delta_ns/0") for line in v)


def test_keys_foreign_to_analysis_rejected():
    v = kcfg.validate_config(_rossler("forecast", shift=1, shifts=[3]))
    assert v == ["/analysis: keys ['shifts'] do not apply to 'forecast'"]


def test_json_syntax_error_has_line_and_column(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "experiment_id": "x",\n  "seed": ,\n}')
    with pytest.raises(kcfg.ConfigError) as exc:
        kcfg.load_config(p)
    assert f"{p}:3:11:" in exc.value.violations[0]


def test_resolve_fills_sub_seeds_from_master():
    cfg = kcfg.resolve(_rossler("measure", shift=5), seed=11)
    assert cfg["seed"] == 11
    assert cfg["integration"]["seed"] == cfg["dictionary"]["seed"] == cfg["split"]["seed"] == 11
    assert cfg["analysis"]["null_seed"] == 11
    explicit = _rossler("measure", shift=5)
    explicit["integration"]["seed"] = 2
    assert kcfg.resolve(explicit, seed=11)["integration"]["seed"] == 2


def test_fingerprint_depends_on_content_only():
    a = kcfg.resolve(_rossler("measure", shift=5))
    b = json.loads(json.dumps(a))
    assert kcfg.fingerprint(a) == kcfg.fingerprint(b)
    b["analysis"]["shift"] = 6
    assert kcfg.fingerprint(a) != kcfg.fingerprint(b)


def test_validate_command_exit_codes(tmp_path, capsys):
    assert cli.main(["validate", "--recipe", "rossler-fig3"]) == 0
    p = tmp_path / "c.json"
    p.write_text(json.dumps(_rossler("measure", shift=600)))
    assert cli.main(["validate", "--config", str(p)]) == 1
    assert "/analysis/shift" in capsys.readouterr().out


def test_run_rejects_command_mismatch(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(_rossler("measure", shift=5)))
    assert cli.main(["sweep", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_measure_run_and_manifest(tmp_path):
    out = tmp_path / "m"
    manifest = cli.run("measure", _rossler("measure", shift=5, n_permutations=3), out)
    rows = _rows(out / "results.csv")
    assert list(rows[0]) == cli.RESULT_COLUMNS
    r = rows[0]
    assert float(r["measure"]) == float(r["marginal_error"]) - float(r["joint_error"])
    assert r["delta_n"] == "" and r["seed"] == "3" and r["shift"] == "5"
    assert {"results.csv", "trajectory.bin", "marginal.kcdmd", "joint.kcdmd"} <= set(manifest["files"])
    assert json.loads((out / "manifest.json").read_text())["fingerprint"] == kcfg.fingerprint(manifest["config"])
    assert cli.replay(out / "manifest.json") == []


def test_seed_override_changes_outputs_and_is_recorded(tmp_path):
    cfg = _rossler("sweep", shifts=[5, 10])
    a = cli.run("sweep", cfg, tmp_path / "a")
    b = cli.run("sweep", cfg, tmp_path / "b", seed=99)
    assert b["overrides"]["seed"] == 99 and b["config"]["seed"] == 99
    assert a["files"]["results.csv"] != b["files"]["results.csv"]


def test_sweep_byte_identical_and_thread_independent(tmp_path):
    cfg = _l96("l96-cumulative", shifts=[3, 6], target=2)
    cli.run("l96-cumulative", cfg, tmp_path / "a")
    cli.run("l96-cumulative", cfg, tmp_path / "b", threads=3)
    for name in ("results.csv", "plateau.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = _rows(tmp_path / "a" / "results.csv")
    assert len(rows) == 2 * 14
    assert len(_rows(tmp_path / "a" / "plateau.csv")) == 4


def test_csv_floats_round_trip(tmp_path):
    cli.run("simulate", _rossler("simulate"), tmp_path)
    csv_traj = read_trajectory_csv(tmp_path / "trajectory.csv")
    bin_traj = read_trajectory_bin(tmp_path / "trajectory.bin", t0=csv_traj.t0)
    np.testing.assert_array_equal(csv_traj.states, bin_traj.states)
    assert cli._fmt(0.1 + 0.2) == "0.30000000000000004"


def test_forecast_outputs(tmp_path):
    cli.run("forecast", _rossler("forecast", shift=1, horizon=20), tmp_path)
    summary = _rows(tmp_path / "forecast_summary.csv")
    assert [r["kind"] for r in summary] == ["marginal", "joint"]
    rows = _rows(tmp_path / "forecast.csv")
    assert len(rows) == 40
    joint = [r for r in rows if r["kind"] == "joint"]
    err = [sum((float(r[f"pred_{i}"]) - float(r[f"ref_{i}"])) ** 2 for i in range(3)) for r in joint]
    assert float(summary[1]["mse"]) == pytest.approx(np.mean(err), rel=1e-12)


def test_counterfactual_outputs(tmp_path):
    cfg = {"experiment_id": "cf", "system": {"kind": "rossler"}, "integration": {"burn_in": 100},
           "analysis": {"kind": "counterfactual", "couplings": [0.0, 0.5], "horizon_steps": 50, "n_ensemble": 2}}
    cli.run("counterfactual", cfg, tmp_path)
    rows = _rows(tmp_path / "counterfactual.csv")
    assert [float(r["coupling"]) for r in rows] == [0.0, 0.5]
    assert float(rows[0]["measure"]) == 0.0 and float(rows[1]["measure"]) > 0.0


def test_perturbation_and_instant_outputs(tmp_path):
    cli.run("perturbation", _l96("perturbation", site=3, offsets=[1, -1], threshold=1e-6), tmp_path / "p")
    assert len(_rows(tmp_path / "p" / "field.csv")) == 400
    assert [r["offset"] for r in _rows(tmp_path / "p" / "arrivals.csv")] == ["1", "-1"]
    m = cli.run("l96-instant", _l96("l96-instant", shift=1, fine_dt=0.005, target=2), tmp_path / "i")
    assert "caveat" in m["notes"]
    assert len(_rows(tmp_path / "i" / "results.csv")) == 14


def test_replay_detects_tampering(tmp_path):
    cli.run("simulate", _rossler("simulate"), tmp_path)
    (tmp_path / "trajectory.csv").write_text("tampered")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    manifest["files"]["trajectory.csv"] = "0" * 64
    (tmp_path / "manifest.json").write_text(json.dumps(manifest))
    problems = cli.replay(tmp_path / "manifest.json")
    assert len(problems) == 1 and problems[0].startswith("trajectory.csv")


def test_replay_cli(tmp_path, capsys):
    cli.run("simulate", _rossler("simulate"), tmp_path)
    assert cli.main(["replay", "--config", str(tmp_path / "manifest.json")]) == 0
    assert "identical" in capsys.readouterr().out


def test_unknown_recipe(capsys):
    assert cli.main(["validate", "--recipe", "nope"]) == 2
    assert "unknown recipe" in capsys.readouterr().err

