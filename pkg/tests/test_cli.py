"""Scenario validation, artifact writing, golden comparison and the entry point."""

from __future__ import annotations

import json

import numpy as np
import pytest

from calderon_lab import cli
from calderon_lab.errors import ConfigError
from calderon_lab.experiments import GROUPS, Scenario, run_experiment

SMALL = {"grid": {"n": 3, "N_t": 16, "N_n": 16}, "metric": {"preset": "tangential_wave"},
         "experiments": [{"name": "forward.solve"}]}


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_shipped_configs_validate():
    from pathlib import Path

    root = Path(__file__).resolve().parents[1] / "configs"
    files = sorted(root.glob("*.json"))
    assert files
    for f in files:
        cli.load_config(f)


@pytest.mark.parametrize("cfg, path", [
    ({"grid": {"N_t": 33}}, "grid.N_t"),
    ({"grid": {"n": 2}}, "grid.n"),
    ({"metric": {"preset": "torus"}}, "metric.preset"),
    ({"experiments": [{"name": "nope"}]}, "experiments.0.name"),
    ({"colour": "red"}, "<root>"),
    ({"patch": {"lower": [0.2], "upper": [0.4, 0.4]}}, "patch.lower"),
])
def test_validation_names_the_field(cfg, path):
    with pytest.raises(ConfigError, match=path.replace(".", r"\.")):
        cli.validate_config(cfg)


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{grid:")
    with pytest.raises(ConfigError):
        cli.load_config(p)


def test_default_plans():
    plan = cli.default_plan("verify-all", 32)
    assert [e["name"] for e in plan] == [n for g in GROUPS.values() for n in g]
    decay = [e for e in plan if e["name"] == "zcoords.decay"][0]
    assert decay["options"] == {"N": 64}
    assert [e["name"] for e in cli.default_plan("runge", 32)] == ["runge.residuals"]
    assert cli.select_plan("greens", {"experiments": [{"name": "forward.solve"}]}, 32) == []


def test_unknown_experiment():
    with pytest.raises(ConfigError):
        run_experiment(Scenario(), "forward.nothing")


def test_clean_rounds_and_converts():
    out = cli._clean({"a": np.float64(1 / 3), "b": [np.int64(2), np.bool_(True)], "c": float("nan"),
                      "d": np.arange(2.0)})
    assert out == {"a": 0.333333333333, "b": [2, True], "c": "nan", "d": [0.0, 1.0]}


def test_empty_experiment_list(tmp_path, capsys):
    code = cli.main(["verify-all", "--config", _write(tmp_path / "c.json", {"experiments": []}),
                     "--out", str(tmp_path / "out")])
    assert code == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["checks"] == 0 and summary["passed"]


def test_config_error_exit_code(tmp_path, capsys):
    code = cli.main(["forward", "--config", _write(tmp_path / "c.json", {"grid": {"N_t": 33}}),
                     "--out", str(tmp_path / "out")])
    assert code == 2
    assert "grid.N_t" in capsys.readouterr().err


def test_small_run_artifacts_and_determinism(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", SMALL)
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert cli.main(["forward", "--config", cfg, "--out", str(out), "--seed", "3"]) == 0
        outs.append(out)
    folder = outs[0] / "forward_solve"
    assert (folder / "profile.dat").exists()
    assert (folder / "face0_normal_derivative.csv").read_text().startswith("x1,x2,d_nu_u")
    assert (outs[0] / "timings.json").exists()
    a, b = [(o / "summary.json").read_bytes() for o in outs]
    assert a == b
    summary = json.loads(a)
    assert summary["scenario"]["seed"] == 3
    assert summary["experiments"][0]["checks"][0]["passed"]
    rep = cli.compare_golden(outs[1], outs[0])
    assert rep.ok and rep.compared == 4


@pytest.fixture
def golden_pair(tmp_path):
    gold = tmp_path / "gold"
    art = tmp_path / "art"
    for d in (gold, art):
        (d / "exp").mkdir(parents=True)
        (d / "summary.json").write_text(json.dumps({"x": 1.0, "flag": True, "names": ["a"]}))
        np.savetxt(d / "exp" / "t.csv", np.array([[1.0, 2.0]]), delimiter=",", header="a,b", comments="")
        (d / "timings.json").write_text(json.dumps({"exp": 1.0}))
    (art / "timings.json").write_text(json.dumps({"exp": 99.0}))
    return art, gold


def test_golden_identical(golden_pair):
    rep = cli.compare_golden(*golden_pair)
    assert rep.ok and rep.compared == 2


def test_golden_detects_perturbation(golden_pair):
    art, gold = golden_pair
    (art / "summary.json").write_text(json.dumps({"x": 1.001, "flag": True, "names": ["a"]}))
    np.savetxt(art / "exp" / "t.csv", np.array([[1.0, 2.1]]), delimiter=",", header="a,b", comments="")
    rep = cli.compare_golden(art, gold)
    assert {e["file"] for e in rep.entries} == {"summary.json", "exp/t.csv"}


def test_golden_tolerates_jitter_and_overrides(golden_pair):
    art, gold = golden_pair
    (art / "summary.json").write_text(json.dumps({"x": 1.0 + 1e-9, "flag": True, "names": ["a"]}))
    assert cli.compare_golden(art, gold).ok
    (art / "summary.json").write_text(json.dumps({"x": 1.01, "flag": True, "names": ["a"]}))
    assert not cli.compare_golden(art, gold).ok
    (gold / "tolerances.json").write_text(json.dumps({"summary.json": {"rtol": 0.1}}))
    assert cli.compare_golden(art, gold).ok


def test_golden_missing_file_and_directory(golden_pair, tmp_path):
    art, gold = golden_pair
    (art / "exp" / "t.csv").unlink()
    rep = cli.compare_golden(art, gold)
    assert rep.entries == [{"file": "exp/t.csv", "kind": "missing_file"}]
    with pytest.raises(FileNotFoundError):
        cli.compare_golden(tmp_path / "absent", gold)


def test_compare_golden_command(golden_pair, capsys):
    assert cli.main(["compare-golden", *map(str, golden_pair)]) == 0
    assert json.loads(capsys.readouterr().out)["ok"]


def test_threads(monkeypatch):
    for var in cli.THREAD_VARIABLES:
        monkeypatch.delenv(var, raising=False)
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.set_threads(None) == 3
    import os

    assert os.environ["OMP_NUM_THREADS"] == "3"
    assert cli.set_threads(2) == 2
    with pytest.raises(ConfigError):
        cli.set_threads(0)
