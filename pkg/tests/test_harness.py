import json
from importlib import resources
from pathlib import Path

import pytest
from click.testing import CliRunner

from svsa.cli import main
from svsa.experiments import REGISTRY, ConfigError, ExperimentConfig, config_from_dict, load_config, run_experiment

CONFIGS = sorted(Path(str(resources.files("svsa") / "configs")).glob("*.toml"))


def write(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


QUICK = 'id = "saa-demo"\nseed = 3\n[params]\nn_iter = 2000\n'


def test_every_registered_experiment_has_a_config():
    assert sorted(p.stem for p in CONFIGS) == sorted(REGISTRY)


@pytest.mark.parametrize("path", CONFIGS, ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg = load_config(path)
    assert cfg.id == path.stem


def test_avi_discounted_seed7(tmp_path):
    cfg = load_config(next(p for p in CONFIGS if p.stem == "avi-discounted"))
    summary = run_experiment(cfg, tmp_path)
    assert summary["passed"]
    assert summary["metrics"]["residual"] <= 0.15
    out = tmp_path / "avi-discounted" / "seed-7"
    assert {p.name for p in out.iterdir()} >= {"trace.csv", "plot.csv", "summary.json"}
    on_disk = json.loads((out / "summary.json").read_text())
    assert on_disk["config_hash"] == cfg.hash and on_disk["seed"] == 7


def test_runs_are_reproducible(tmp_path):
    cfg = config_from_dict({"id": "saa-demo", "seed": 5, "params": {"n_iter": 3000}})
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert a["metrics"] == b["metrics"]
    for name in ("trace.csv", "plot.csv"):
        fa = tmp_path / "a" / "saa-demo" / "seed-5" / name
        fb = tmp_path / "b" / "saa-demo" / "seed-5" / name
        assert fa.read_bytes() == fb.read_bytes()


def test_config_hash_tracks_params():
    a = config_from_dict({"id": "saa-demo", "seed": 1})
    b = config_from_dict({"id": "saa-demo", "seed": 1, "params": {"radius": 0.1}})
    c = config_from_dict({"id": "saa-demo", "seed": 1, "params": {"radius": 0.2}})
    assert a.hash == b.hash != c.hash


@pytest.mark.parametrize(
    "data",
    [
        {"id": "no-such-experiment", "seed": 0},
        {"seed": 0},
        {"id": "saa-demo"},
        {"id": "saa-demo", "seed": "zero"},
        {"id": "saa-demo", "seed": 0, "params": {"colour": "red"}},
        {"id": "saa-demo", "seed": 0, "params": {"n_iter": "many"}},
        {"id": "saa-demo", "seed": 0, "params": {"schedule": "polynomial", "q": 0.4}},
        {"id": "saa-demo", "seed": 0, "params": {"a0": -1.0}},
        {"id": "saa-demo", "seed": 0, "extra": 1},
    ],
)
def test_config_errors(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_unknown_id_writes_nothing(tmp_path):
    with pytest.raises(ConfigError):
        run_experiment(ExperimentConfig("no-such-experiment", 0), tmp_path)
    assert not any(tmp_path.iterdir())


def test_deterministic_experiment_without_seed(tmp_path):
    cfg = config_from_dict({"id": "inward-check", "params": {"n_boundary": 16}})
    summary = run_experiment(cfg, tmp_path)
    assert summary["passed"]
    assert (tmp_path / "inward-check" / "seed-none" / "summary.json").exists()


# ------------------------------------------------------------------ CLI


def test_cli_list():
    result = CliRunner().invoke(main, ["list"])
    assert result.exit_code == 0
    for name in REGISTRY:
        assert name in result.output


def test_cli_run_pass(tmp_path):
    result = CliRunner().invoke(main, ["run", write(tmp_path, QUICK), "--out", str(tmp_path / "out")])
    assert result.exit_code == 0, result.output
    assert "[PASS] saa-demo seed=3" in result.output
    assert (tmp_path / "out" / "saa-demo" / "seed-3" / "trace.csv").exists()


def test_cli_run_fail(tmp_path):
    text = QUICK + "tolerance = -1.0\n"
    result = CliRunner().invoke(main, ["run", write(tmp_path, text), "--out", str(tmp_path)])
    assert result.exit_code == 1
    assert "[FAIL]" in result.output and "reaches_ball" in result.output


@pytest.mark.parametrize(
    "text",
    ['id = "saa-demo"\n', 'id = "nope"\nseed = 0\n', "id = [unclosed\n", QUICK + "q = 0.3\nschedule = \"polynomial\"\n"],
)
def test_cli_run_config_error(tmp_path, text):
    result = CliRunner().invoke(main, ["run", write(tmp_path, text), "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert not (tmp_path / "out").exists()


def test_cli_missing_file(tmp_path):
    assert CliRunner().invoke(main, ["run", str(tmp_path / "absent.toml")]).exit_code == 2


def test_cli_export_json(tmp_path):
    result = CliRunner().invoke(main, ["run", write(tmp_path, QUICK), "--export-json"])
    data = json.loads(result.output)
    assert data["params"]["n_iter"] == 2000 and data["params"]["radius"] == 0.1


def test_cli_sweep(tmp_path):
    result = CliRunner().invoke(main, ["sweep", write(tmp_path, QUICK), "--seeds", "0..2", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert sorted(p.name for p in (tmp_path / "saa-demo").iterdir()) == ["seed-0", "seed-1", "seed-2"]


def test_cli_sweep_bad_range(tmp_path):
    result = CliRunner().invoke(main, ["sweep", write(tmp_path, QUICK), "--seeds", "5..1"])
    assert result.exit_code == 2


def test_cli_honours_env_out(tmp_path, monkeypatch):
    monkeypatch.setenv("SVSA_OUT", str(tmp_path / "env-out"))
    result = CliRunner().invoke(main, ["run", write(tmp_path, QUICK)])
    assert result.exit_code == 0
    assert (tmp_path / "env-out" / "saa-demo" / "seed-3" / "summary.json").exists()


def test_cli_verify_schedule_criterion(tmp_path):
    runner = CliRunner()
    ok = runner.invoke(main, ["verify", "--only", "12", "--out", str(tmp_path)])
    assert ok.exit_code == 0 and "[PASS] 12" in ok.output
    tampered = runner.invoke(main, ["verify", "--only", "12", "--tamper-q", "0.4", "--out", str(tmp_path)])
    assert tampered.exit_code == 1 and "[FAIL] 12" in tampered.output
    rows = json.loads((tmp_path / "verify.json").read_text())
    assert len(rows) == 1 and rows[0]["passed"] is False
