import json

import pytest

from fedprune.cli import (
    apply_overrides,
    main,
    parse_config,
    run_id,
    serialize_config,
)
from fedprune.sim import ConfigError, ExperimentConfig

SMALL_CONFIG = """
[data]
classes = 4
per_class = 40
dim = 8
spread = 1.0

[federation]
clients = 3

[model]
hidden = 16,16,16

[training]
algorithm = StaticRandom
rounds = 2
local_epochs = 1
batch_size = 16
pretrain_epochs = 1

[pruning]
density = 0.1
interval = 1
stop_round = 2

[run]
seed = 3
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(SMALL_CONFIG)
    return path


# -- config parsing -------------------------------------------------------------

def test_config_round_trip(config_file, tmp_path):
    cfg = parse_config(config_file)
    assert cfg.hidden == (16, 16, 16)
    assert cfg.algorithm == "StaticRandom"
    again = tmp_path / "again.ini"
    again.write_text(serialize_config(cfg))
    assert parse_config(again) == cfg


def test_unknown_key_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[data]\nwat = 1\n")
    with pytest.raises(ConfigError, match="wat"):
        parse_config(path)


def test_unknown_section_rejected(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("[mystery]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config(path)


def test_overrides_bare_and_sectioned():
    cfg = ExperimentConfig()
    apply_overrides(cfg, ["density=0.01", "training.lr=0.1",
                          "hidden=8,8", "csv_header=true"])
    assert cfg.density == 0.01
    assert cfg.lr == 0.1
    assert cfg.hidden == (8, 8)
    assert cfg.csv_header is True
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["nonsense=1"])
    with pytest.raises(ConfigError):
        apply_overrides(cfg, ["no_equals"])


# -- run command ------------------------------------------------------------------

def test_cmd_run_writes_artifacts(config_file, tmp_path):
    out = tmp_path / "out"
    rc = main(["run", "--config", str(config_file), "--out", str(out)])
    assert rc == 0
    cfg = parse_config(config_file)
    run_dir = out / run_id(cfg)
    for name in ("manifest.json", "metrics.csv", "metrics.jsonl",
                 "final.ckpt"):
        assert (run_dir / name).exists(), name
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["config"]["pruning"]["density"] == 0.1
    assert manifest["config"]["training"]["algorithm"] == "StaticRandom"


def test_cmd_run_set_override_lands_in_manifest(config_file, tmp_path):
    out = tmp_path / "out"
    rc = main(["run", "--config", str(config_file), "--out", str(out),
               "--set", "density=0.05"])
    assert rc == 0
    run_dirs = list(out.iterdir())
    assert len(run_dirs) == 1
    manifest = json.loads((run_dirs[0] / "manifest.json").read_text())
    assert manifest["config"]["pruning"]["density"] == 0.05
    assert manifest["overrides"] == ["density=0.05"]


def test_cmd_run_missing_config(tmp_path):
    rc = main(["run", "--config", str(tmp_path / "nope.ini")])
    assert rc != 0


def test_cmd_run_invalid_config(config_file, tmp_path):
    rc = main(["run", "--config", str(config_file), "--out",
               str(tmp_path / "o"), "--set", "density=7.0"])
    assert rc == 2


# -- sweep command ------------------------------------------------------------------

def test_cmd_sweep_density_axis(config_file, tmp_path):
    out = tmp_path / "sweep"
    rc = main(["sweep", "--config", str(config_file), "--axis", "density",
               "--values", "0.1,0.2", "--out", str(out)])
    assert rc == 0
    summary = (out / "summary.csv").read_text().strip().splitlines()
    assert summary[0].startswith("run_id,axis,value")
    assert len(summary) == 3
    metric_files = list(out.glob("*/metrics.csv"))
    assert len(metric_files) == 2


def test_cmd_sweep_seed_axis(config_file, tmp_path):
    out = tmp_path / "sweep"
    rc = main(["sweep", "--config", str(config_file), "--axis", "seed",
               "--values", "1,2,3", "--out", str(out)])
    assert rc == 0
    assert len(list(out.glob("*/final.ckpt"))) == 3


def test_cmd_sweep_unknown_axis(config_file, tmp_path):
    rc = main(["sweep", "--config", str(config_file), "--axis", "wat",
               "--values", "1", "--out", str(tmp_path / "s")])
    assert rc == 2


def test_cmd_sweep_empty_values(config_file, tmp_path):
    rc = main(["sweep", "--config", str(config_file), "--axis", "seed",
               "--values", ",", "--out", str(tmp_path / "s")])
    assert rc == 2


# -- cost command ------------------------------------------------------------------

def test_cmd_cost_reports(config_file, tmp_path):
    out = tmp_path / "out"
    main(["run", "--config", str(config_file), "--out", str(out)])
    ckpt = next(out.glob("*/final.ckpt"))
    report_path = tmp_path / "cost.json"
    rc = main(["cost", "--ckpt", str(ckpt), "--bits", "32",
               "--out", str(report_path)])
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert {"storage", "memory", "flops"} <= set(report)
    schemes = {t["scheme"] for t in report["storage"]["tensors"].values()}
    assert schemes & {"csr", "coo", "bitmap"}  # sparse tensors got compressed
    assert any(f["flops_peak"] > 0 for f in report["flops"])


def test_cmd_cost_dense_checkpoint_storage(config_file, tmp_path):
    out = tmp_path / "out"
    main(["run", "--config", str(config_file), "--out", str(out),
          "--set", "algorithm=DenseFedAvg"])
    ckpt = next(out.glob("*/final.ckpt"))
    report_path = tmp_path / "cost.json"
    rc = main(["cost", "--ckpt", str(ckpt), "--out", str(report_path)])
    assert rc == 0
    report = json.loads(report_path.read_text())
    from fedprune.sim import load_checkpoint
    net, mask, _ = load_checkpoint(ckpt)
    assert mask is None
    n_params = sum(p.size for p in net.params().values())
    assert report["storage"]["bytes"] == n_params * 32 / 8


def test_cmd_cost_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_text("{broken")
    rc = main(["cost", "--ckpt", str(bad)])
    assert rc == 1
