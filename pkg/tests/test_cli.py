import csv
import json

import pytest

from ictd.cli import main
from ictd.config import ConfigError, RunConfig, load_config

FAST = {
    "verify": {"instances": 12, "lemma_prompts": 5, "offset_queries": 5},
    "surface": {"grid_size": 5, "n_context": 8, "layers": 5, "tune_grid": {"points": 5}},
    "train": {"steps": 3, "batch_size": 2, "n_context": 8, "layers": 5, "eval_size": 4},
    "ablate": {"values": [2, 4], "fixed_other": 4, "grid_size": 5},
    "transfer": {"steps": 3, "batch_size": 2, "n_context": 8, "layers": 5, "eval_size": 4},
    "baseline": {"batch_size": 2, "n_context": 8, "layers": 5, "eval_size": 4, "grid_size": 5,
                 "grid": {"points": 5}},
}


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(FAST))
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_config_round_trip():
    cfg = RunConfig.from_dict(FAST)
    again = RunConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.hash() == cfg.hash()
    assert cfg.surface.grid_size == 5 and cfg.surface.layers == 5 and cfg.train.optimizer == "adam"


@pytest.mark.parametrize("bad, where", [
    ({"surface": {"grid": 3}}, "surface"),
    ({"train": {"optimizer": "sgd"}}, "train.optimizer"),
    ({"train": {"steps": "ten"}}, "train.steps"),
    ({"ablate": {"axis": "width"}}, "ablate.axis"),
    ({"domains": {"x": {"kind": "synthetic", "delta": -1}}}, "domains.x"),
])
def test_config_errors_name_the_key(bad, where):
    with pytest.raises(ConfigError, match=where.replace(".", r"\.")):
        RunConfig.from_dict(bad)


def test_invalid_json_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"seed": 1,\n "x": }')
    with pytest.raises(ConfigError, match=r":2:"):
        load_config(p)


def test_exit_codes(tmp_path, fast_config):
    assert main(["verify", "--config", str(fast_config), "--out", str(tmp_path / "a")]) == 0
    assert main(["verify", "--config", str(fast_config), "--tolerance", "0", "--out", str(tmp_path / "b")]) == 1
    assert main(["surface", "--preset", "nope", "--out", str(tmp_path / "c")]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "d")]) == 2
    assert main(["train", "--seed", "-1", "--out", str(tmp_path / "e")]) == 2


@pytest.mark.parametrize("command, csv_name, header", [
    ("surface", "surface.csv", ["x", "y", "v_pred_raw", "v_true"]),
    ("train", "loss_curve.csv", ["step", "alpha", "loss", "loss[0:appendixF]"]),
    ("ablate", "ablation_context.csv", ["axis_value", "pearson", "centered_rmse"]),
    ("baseline", "baseline.csv", ["family", "alpha", "pearson", "centered_rmse", "final_loss"]),
    ("transfer", "transfer/cell_r0_c1.csv", ["step", "alpha", "loss"]),
])
def test_artifact_schema_and_determinism(tmp_path, fast_config, command, csv_name, header):
    outs = [tmp_path / "one", tmp_path / "two"]
    for out in outs:
        assert main([command, "--config", str(fast_config), "--seed", "3", "--out", str(out)]) == 0
    rows = read_rows(outs[0] / csv_name)
    assert rows[0] == header and len(rows) > 1
    assert (outs[0] / csv_name).read_bytes() == (outs[1] / csv_name).read_bytes()
    meta = next(p for p in outs[0].glob("*.json"))
    data = json.loads(meta.read_text())
    assert data["seed"] == 3 and data["config"]["seed"] == 3
    assert RunConfig.from_dict(data["config"]).hash() == data["config_hash"]


def test_surface_grid_row_count(tmp_path, fast_config):
    main(["surface", "--config", str(fast_config), "--out", str(tmp_path)])
    assert len(read_rows(tmp_path / "surface.csv")) == 1 + 25


def test_output_dir_from_environment(tmp_path, fast_config, monkeypatch):
    monkeypatch.setenv("ICTD_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["ablate", "--config", str(fast_config)]) == 0
    assert (tmp_path / "env" / "ablation_context.csv").exists()


def test_custom_domain_via_config(tmp_path):
    cfg = {"domains": {"wide": {"kind": "synthetic", "delta": 2.0, "m": 3}},
           "surface": {"domain": "wide", "grid_size": 4, "n_context": 6, "layers": 4, "alpha": 0.5}}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    assert main(["surface", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    meta = json.loads((tmp_path / "o" / "surface_meta.json").read_text())
    assert meta["summary"]["alpha"] == 0.5


def test_two_by_two_surface(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"surface": {"grid_size": 2}}))
    assert main(["surface", "--config", str(p), "--out", str(tmp_path)]) == 0
    rows = read_rows(tmp_path / "surface.csv")[1:]
    assert len(rows) == 4 and all(v not in ("inf", "nan") for r in rows for v in r)


def test_default_train_improves(tmp_path):
    assert main(["train", "--out", str(tmp_path)]) == 0
    meta = json.loads((tmp_path / "train_meta.json").read_text())["summary"]
    assert meta["final_loss"] <= meta["initial_loss"]
