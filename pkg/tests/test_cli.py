import csv
import json
from pathlib import Path

import pytest

from vpmcf import config as cfg
from vpmcf.cli import execute, main
from vpmcf.output import SERIES_COLUMNS

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def write_config(tmp_path, body, name="c.toml"):
    path = tmp_path / name
    path.write_text(body, encoding="utf-8")
    return str(path)


HEMI = """
[scenario]
kind = "hemisphere"
N = 100
[scenario.params]
radius = 1.0
[run]
horizon = 1.0
"""


def test_hemisphere_run_converges_at_once(tmp_path):
    code = main(["run", "--config", write_config(tmp_path, HEMI), "--output-dir", str(tmp_path / "out")])
    assert code == 0
    out = tmp_path / "out"
    for name in ("series.csv", "monitor.jsonl", "ledger.json", "summary.json"):
        assert (out / name).is_file(), name
    assert not (out / "diagnostic.json").exists()
    with open(out / "series.csv", newline="") as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == SERIES_COLUMNS
    summary = json.loads((out / "summary.json").read_text())
    assert summary["reason"] == "converged" and summary["exit_code"] == 0
    assert list((out / "snapshots").glob("profile_*.svg"))


def test_zero_horizon_is_a_config_error(tmp_path, capsys):
    path = write_config(tmp_path, HEMI.replace("horizon = 1.0", "horizon = 0.0"))
    assert main(["run", "--config", path, "--output-dir", str(tmp_path / "o")]) == 1
    assert "horizon" in capsys.readouterr().err


def test_unknown_shape_is_a_config_error(tmp_path):
    path = write_config(tmp_path, HEMI.replace('"hemisphere"', '"torus"'))
    assert main(["run", "--config", path]) == 1


def test_unknown_key_is_rejected(tmp_path):
    path = write_config(tmp_path, HEMI + "\n[policy]\ncfl = 0.3\n")
    assert main(["validate", "--config", path]) == 1


def test_missing_config_file_and_bad_arguments(tmp_path):
    assert main(["run", "--config", str(tmp_path / "nope.toml")]) == 1
    assert main(["frobnicate"]) == 1
    assert main([]) == 1


def test_validate(tmp_path, capsys):
    assert main(["validate", "--config", write_config(tmp_path, HEMI)]) == 0
    assert capsys.readouterr().out.strip()


def test_oracle_sphere_prints_closed_forms(capsys):
    assert main(["oracle", "sphere", "--radius", "1"]) == 0
    out = capsys.readouterr().out
    assert "12.566371" in out and "4.188790" in out


def test_oracle_cylinder_and_unknown(capsys):
    assert main(["oracle", "cylinder_segment", "--radius", "1", "--length", "2"]) == 0
    assert "12.566371" in capsys.readouterr().out
    assert main(["oracle", "torus"]) == 1


def test_oracle_refine_scenario(capsys):
    code = main(["oracle", "refine", "--scenario", "sphere", "--param", "radius=1.0", "--N", "201"])
    assert code == 0
    out = capsys.readouterr().out
    assert "12.56637" in out and "converging" in out


def test_oracle_refine_needs_a_source():
    assert main(["oracle", "refine"]) == 1
    assert main(["oracle", "refine", "--scenario", "blob"]) == 1


def test_overrides_and_environment(tmp_path, monkeypatch):
    path = write_config(tmp_path, HEMI)
    conf = cfg.load(path, ["policy.cfl_safety=0.25", "scenario.params.radius=2.0", "run.horizon=0.5"])
    assert conf.policy.cfl_safety == 0.25
    assert conf.scenario.params["radius"] == 2.0
    assert conf.horizon == 0.5
    conf = cfg.load(path, env={"VPMCF_OUTPUT_DIR": str(tmp_path / "envdir")})
    assert Path(conf.output_dir) == tmp_path / "envdir"
    monkeypatch.setenv("VPMCF_OUTPUT_DIR", str(tmp_path / "envdir2"))
    assert main(["run", "--config", path]) == 0
    assert (tmp_path / "envdir2" / "summary.json").is_file()


def test_bad_override_is_rejected(tmp_path):
    path = write_config(tmp_path, HEMI)
    with pytest.raises(cfg.ConfigError):
        cfg.load(path, ["no_equals_sign"])
    assert main(["run", "--config", path, "--set", "policy.mode=fast"]) == 1


def test_alpha_parsing(tmp_path):
    assert cfg.parse_alpha("sqrt(2)") == pytest.approx(2 ** 0.5)
    assert cfg.parse_alpha(3) == 3.0
    with pytest.raises(cfg.ConfigError):
        cfg.parse_alpha("two")
    with pytest.raises(cfg.ConfigError):
        cfg.load(write_config(tmp_path, HEMI + "\n[monitor]\nalpha_list = [1.0]\n"))


def test_dumbbell_mcf_scenario_pinches(tmp_path):
    code = main(["run", "--config", str(SCENARIOS / "dumbbell_mcf.toml"), "--output-dir", str(tmp_path / "d")])
    assert code == 2
    diag = json.loads((tmp_path / "d" / "diagnostic.json").read_text())
    assert diag["reason"] == "pinch-detected"
    assert 150 < diag["neck"]["node"] < 250
    assert diag["neck"]["x"] == pytest.approx(3.0, abs=0.5)  # mid-way between the bulbs of a length-6 dumbbell


def test_execute_without_writing(tmp_path):
    conf = cfg.load(write_config(tmp_path, HEMI))
    outcome = execute(conf, write=False)
    assert outcome.exit_code == 0 and outcome.output_dir is None
    assert outcome.reports and outcome.reports[0].passed


@pytest.mark.parametrize("name", ["hemisphere", "perturbed_hemisphere", "perturbed_sphere", "dumbbell_mcf", "dumbbell_vp"])
def test_shipped_scenarios_validate(name):
    assert main(["validate", "--config", str(SCENARIOS / f"{name}.toml")]) == 0
