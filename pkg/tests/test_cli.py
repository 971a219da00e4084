import csv
import json

import pytest

from mobiroute import cli
from mobiroute.cli import AGGREGATE_HEADER, GRID_HEADER, ROUNDS_HEADER, SUMMARY_HEADER, main
from mobiroute.config import ExperimentConfig
from mobiroute.errors import ConfigError, ProtocolViolation
from mobiroute.features import input_names
from mobiroute.mobility import parse_trace

SMALL = dict(n_train=10, n_test=10, area_x=250.0, area_y=250.0, t_train=1000, t_test=1200, t_cooldown=400,
             t_round=500, iterations=2, steps_per_iteration=10, runs=2, packet_rate=0.02)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = ExperimentConfig(**SMALL, output_dir=str(root))
    (root / "exp.json").write_text(cfg.dumps())
    assert main(["train", "--config", str(root / "exp.json"), "--quiet"]) == 0
    return root


def test_config_round_trip():
    cfg = ExperimentConfig(**SMALL)
    again = ExperimentConfig.loads(cfg.dumps())
    assert again == cfg and again.dumps() == cfg.dumps()


def test_config_rejects_unknown_keys_and_bad_values():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"n_trian": 25})
    with pytest.raises(ConfigError):
        ExperimentConfig(gamma=1.5)
    with pytest.raises(ConfigError):
        ExperimentConfig(strategies=("direct", "flooding"))
    with pytest.raises(ConfigError):
        ExperimentConfig.loads("{not json")


def test_derived_configs_follow_the_keys():
    cfg = ExperimentConfig(x_train=40.0, x_test=70.0, ttl_train=200, ttl_test=999, n_history=2)
    assert cfg.train_sim().tx_range == 40.0 and cfg.train_sim().ttl == 200
    t = cfg.test_sim(seed=4, n_devices=64)
    assert (t.tx_range, t.ttl, t.n_devices, t.seed, t.cooldown) == (70.0, 999, 64, 4, cfg.t_cooldown)
    assert cfg.rl_config().n_history == 2


def test_exit_codes(tmp_path, monkeypatch):
    assert main(["evaluate", "--set", "no_such_key=1"]) == 2
    assert main(["evaluate", "--set", "runs=0"]) == 2
    assert main(["evaluate", "--set", "strategies=[\"deeprl\"]"]) == 2  # needs a checkpoint
    assert main(["evaluate", "--config", str(tmp_path / "missing.json")]) == 3
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"format": "other"}))
    assert main(["qgrid", "--checkpoint", str(bad), "--x", "0", "--y", "1", "--out", str(tmp_path / "g.csv")]) == 2

    def boom(args):
        raise ProtocolViolation("illegal action")

    monkeypatch.setattr(cli, "run_command", boom)
    assert main(["evaluate"]) == 4


def test_generate_mobility(tmp_path):
    out = tmp_path / "trace.txt"
    assert main(["generate-mobility", "--out", str(out), "--devices", "7", "--duration", "500", "--seed", "3"]) == 0
    text = out.read_text()
    assert sum(1 for line in text.splitlines() if line and not line.startswith("#")) == 7
    tr = parse_trace(text)
    assert tr.device_count == 7 and tr.duration == 500.0


def test_train_outputs(workdir):
    curve = rows(workdir / "training_curve.csv")
    assert tuple(curve[0]) == cli.CURVE_HEADER
    assert len(curve) == 1 + SMALL["t_train"] // SMALL["t_round"]
    meta = json.loads((workdir / "checkpoint.json").read_text())["meta"]
    assert meta["config"]["n_train"] == SMALL["n_train"]


def test_evaluate_outputs(workdir):
    base = ["--config", str(workdir / "exp.json")]
    assert main(["evaluate", *base, "--checkpoint", str(workdir / "checkpoint.json")]) == 0
    per_run = rows(workdir / "evaluate_runs.csv")
    summary = rows(workdir / "evaluate_summary.csv")
    rounds = rows(workdir / "evaluate_rounds.csv")
    assert tuple(per_run[0]) == SUMMARY_HEADER and len(per_run) == 1 + 5 * SMALL["runs"]
    assert tuple(summary[0]) == AGGREGATE_HEADER and len(summary) == 1 + 5
    assert tuple(rounds[0]) == ROUNDS_HEADER
    assert len(rounds) == 1 + 5 * SMALL["runs"] * (SMALL["t_test"] // SMALL["t_round"])
    direct = [r for r in per_run[1:] if r[0] == "direct"]
    assert all(float(r[SUMMARY_HEADER.index("mean_forwards")]) == 1.0 for r in direct)


def test_sweep_outputs(workdir):
    base = ["--config", str(workdir / "exp.json"), "--strategies", "direct,utility", "--runs", "1"]
    assert main(["sweep", *base, "--axis", "n_test", "--values", "6,8,12"]) == 0
    out = rows(workdir / "sweep_n_test.csv")
    assert len(out) == 1 + 3 * 2
    assert sorted({r[2] for r in out[1:]}) == ["12", "6", "8"]
    assert main(["sweep", *base, "--axis", "speed", "--values", "1"]) == 2


def test_qgrid(workdir):
    out = workdir / "grid.csv"
    ck = str(workdir / "checkpoint.json")
    assert main(["qgrid", "--checkpoint", ck, "--x", "distance", "--y", "one_hop", "--out", str(out)]) == 0
    grid = rows(out)
    assert tuple(grid[0]) == GRID_HEADER and len(grid) == 1 + 2500
    assert main(["qgrid", "--checkpoint", ck, "--x", "distance", "--y", "distance", "--out", str(out)]) == 2
    assert main(["qgrid", "--checkpoint", ck, "--x", "bogus", "--y", "1", "--out", str(out)]) == 2
    assert "distance" in input_names(5)
