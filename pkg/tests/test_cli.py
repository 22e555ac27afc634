import csv
import json
from pathlib import Path

import jsonschema
import pytest

from brwre import cli
from brwre.config import PRESETS, ConfigError, ExperimentConfig, load_schema, preset

TWO_ATOM = {"family": "mixture",
            "params": {"laws": [{"0": 0.5, "2": 0.5}, {"0": 0.25, "2": 0.75}],
                       "weights": [0.5, 0.5]}}
SMALL = {"disorder": TWO_ATOM, "d": 1, "theta": "0", "horizons": [8, 16], "replicas_env": 1000,
         "replicas_pop": 2, "cap": 10000, "seed": 3,
         "options": {"sw_t_max": 40, "sw_replicas": 100, "t_max": 12, "s_max": 3,
                     "epsilons": [0.05, 0.1]}}


def write_config(tmp_path, raw, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return str(p)


def test_config_roundtrip():
    cfg = ExperimentConfig.from_dict(SMALL)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict() and again.hash() == cfg.hash()
    assert again.disorder == cfg.disorder


@pytest.mark.parametrize("patch, field", [
    ({"d": 0}, "d"),
    ({"replicas_env": "many"}, "replicas_env"),
    ({"theta": "1/2,x"}, "theta"),
    ({"theta": "1/2,1/2"}, "theta"),
    ({"disorder": {"family": "gamma", "params": {}}}, "disorder.family"),
    ({"horizons": []}, "horizons"),
    ({"bogus": 1}, "<root>"),
])
def test_invalid_config_names_field(patch, field):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict({**SMALL, **patch})
    assert exc.value.field == field


def test_presets():
    for name in PRESETS:
        cfg = preset(name)
        assert PRESETS[name]["description"]
        assert ExperimentConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
    assert preset("sandwich").disorder.with_seed(3) == ExperimentConfig.from_dict(SMALL).disorder
    growth = preset("thm-NT-growth")
    assert growth.options["t_min"] and growth.replicas_env >= 2
    with pytest.raises(ConfigError):
        preset("nonexistent")


def test_malformed_theta_exit_code(tmp_path, capsys):
    path = write_config(tmp_path, {**SMALL, "theta": "1/2;0"})
    assert cli.main(["directional", "--config", path, "--out", str(tmp_path / "o")]) == 1
    assert "theta" in capsys.readouterr().err


def test_inadmissible_horizon_is_config_error(tmp_path):
    path = write_config(tmp_path, {**SMALL, "theta": "1/2", "horizons": [6]})
    assert cli.main(["directional", "--config", path, "--out", str(tmp_path / "o")]) == 1


def test_unknown_preset_exit_code(tmp_path):
    assert cli.main(["survival", "--preset", "nope", "--out", str(tmp_path)]) == 1


def test_runtime_error_exit_code(tmp_path, monkeypatch, capsys):
    def boom(cfg):
        raise RuntimeError("simulated failure")
    monkeypatch.setitem(cli.COMMANDS, "survival", boom)
    path = write_config(tmp_path, SMALL)
    assert cli.main(["survival", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert "simulated failure" in capsys.readouterr().err


def test_verify_quick_on_gw_preset(tmp_path):
    out = tmp_path / "v"
    assert cli.main(["verify", "--suite", "quick", "--preset", "gw-constant", "--out", str(out)]) == 0
    rep = json.loads((out / "verify.json").read_text())
    names = {c["name"]: c for c in rep["checks"]}
    assert rep["passed"] and rep["sigma_gw"] == pytest.approx(2 / 3)
    assert names["free_energy_bracket"]["value"] == pytest.approx(0.4054651081081644, abs=1e-12)
    assert names["growth_slope_survivors"]["passed"] and names["survival_vs_gw"]["passed"]


def test_verify_violation_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(cli.genfun, "gw_bound", lambda spec: 0.95)
    assert cli.main(["verify", "--preset", "gw-constant", "--out", str(tmp_path)]) == 3


def test_free_energy_example(tmp_path):
    raw = {"disorder": TWO_ATOM, "d": 1, "horizons": [64], "replicas_env": 200, "seed": 1}
    out = tmp_path / "fe"
    assert cli.main(["free-energy", "--config", write_config(tmp_path, raw), "--out", str(out)]) == 0
    rows = list(csv.DictReader((out / "free_energy.csv").open()))
    assert len(rows) == 200 and list(rows[0]) == ["replica_id", "t", "ln_Z", "per_step_rate"]
    summary = json.loads((out / "free_energy.json").read_text())
    lo, hi = summary["bounds"]
    assert summary["in_bounds"] and lo - 3 * summary["std_err"] <= summary["estimate"] <= hi


def test_env_overrides_and_seed_flag(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.ENV_OUT, str(tmp_path / "from_env"))
    monkeypatch.setenv(cli.ENV_WORKERS, "2")
    path = write_config(tmp_path, SMALL)
    assert cli.main(["survival", "--config", path, "--seed", "99"]) == 0
    man = json.loads((tmp_path / "from_env" / "run_manifest.json").read_text())
    assert man["master_seed"] == 99
    monkeypatch.setenv(cli.ENV_WORKERS, "two")
    assert cli.main(["survival", "--config", path]) == 1


def test_seed_changes_artifacts(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    a = cli.run("free-energy", cfg, str(tmp_path / "a"))
    b = cli.run("free-energy", cfg.with_overrides(seed=4), str(tmp_path / "b"))
    assert a.artifacts["free_energy.csv"] != b.artifacts["free_energy.csv"]


def test_workers_do_not_change_artifacts(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    a = cli.run("survival", cfg, str(tmp_path / "a"))
    b = cli.run("survival", cfg.with_overrides(workers=2), str(tmp_path / "b"))
    assert a.artifacts == b.artifacts


def test_all_outputs_validate_against_schemas(tmp_path):
    cfg = ExperimentConfig.from_dict(SMALL)
    gw = ExperimentConfig.from_dict({**SMALL, "disorder": {"family": "deterministic",
                                                           "params": {"law": {"0": 0.25, "2": 0.75}}}})
    for sub in cli.SUBCOMMANDS:
        out = tmp_path / sub
        res = cli.run(sub, gw if sub == "verify" else cfg, str(out))
        files = list(res.artifacts) + ["run_manifest.json"]
        for name in files:
            if name.endswith(".json"):
                doc = json.loads((out / name).read_text())
                jsonschema.validate(doc, load_schema(cli.OUTPUT_SCHEMAS[name]))
        man = json.loads((out / "run_manifest.json").read_text())
        assert set(man["outputs"]) == set(res.artifacts)
        for name, digest in man["outputs"].items():
            assert cli.sha256((out / name).read_bytes()) == digest


def test_documented_columns_match_outputs(tmp_path):
    doc = (Path(__file__).parents[1] / "docs" / "outputs.md").read_text()
    cfg = ExperimentConfig.from_dict(SMALL)
    for sub in ("simulate", "survival", "free-energy", "directional", "extinction-field",
                "embedded-sw", "concentration"):
        res = cli.run(sub, cfg, str(tmp_path / sub))
        for name, data in res.artifacts.items():
            if name.endswith(".csv"):
                header = data.decode().splitlines()[0]
                assert f"`{header}`" in doc, (name, header)
