"""Command-line surface tests: subcommands, outputs, exit codes."""

import csv
import io
import json
from contextlib import redirect_stdout

import pytest

from twinloop import ChannelParams, required_power
from twinloop.cli import main


def small_config_file(tmp_path, **overrides):
    from twinloop import ExperimentConfig

    config = ExperimentConfig()
    config.mode = overrides.pop("mode", "reverb")
    config.episodes = overrides.pop("episodes", 2)
    config.master_seed = overrides.pop("master_seed", 3)
    config.fleet.count = 4
    config.capacity = 3
    config.plant.episode_cap = 30
    config.plant.process_noise_std = (0.02, 1e-3)
    config.rl.total_steps = overrides.pop("total_steps", 0)
    config.rl.batch_size = 128
    config.rl.minibatch_size = 32
    config.rl.epochs = 2
    for key, value in overrides.items():
        setattr(config, key, value)
    path = tmp_path / "config.json"
    path.write_text(config.to_json())
    return path


class TestValidateChannel:
    def test_csv_output_matches_library(self):
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = main(["validate-channel", "--epsilon", "1e-2",
                         "--distance-m", "20", "--trials", "20000",
                         "--seed", "1"])
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(buf.getvalue())))
        assert len(rows) == 1
        params = ChannelParams.from_config(outage_epsilon=1e-2)
        assert float(rows[0]["required_power_w"]) == pytest.approx(
            required_power(20.0, params), rel=1e-12)
        assert 0.0 <= float(rows[0]["empirical_outage"]) <= 0.05


class TestEvaluate:
    def test_writes_outputs_and_returns_zero(self, tmp_path):
        config_path = small_config_file(tmp_path)
        out = tmp_path / "results"
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = main(["evaluate", "--config", str(config_path),
                         "--out", str(out)])
        assert code == 0
        assert (out / "episodes.csv").exists()
        assert (out / "summary.json").exists()
        line = json.loads(buf.getvalue().splitlines()[-1])
        assert line["episodes"] == 2

    def test_flag_overrides_mode(self, tmp_path):
        config_path = small_config_file(tmp_path)
        out = tmp_path / "results"
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = main(["evaluate", "--config", str(config_path),
                         "--mode", "perfect", "--out", str(out)])
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["mode"] == "perfect"
        assert summary["aggregate"]["mrmse"]["mean"] == 0.0

    def test_missing_config_exits_one(self, capsys):
        assert main(["evaluate", "--config", "/no/such/file.json"]) == 1

    def test_invalid_config_exits_one(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"mode": "bogus"}))
        assert main(["evaluate", "--config", str(path)]) == 1


class TestTrain:
    def test_tiny_training_run(self, tmp_path):
        config_path = small_config_file(tmp_path, total_steps=256)
        out = tmp_path / "trained"
        buf = io.StringIO()
        with redirect_stdout(buf):
            code = main(["train", "--config", str(config_path),
                         "--out", str(out)])
        assert code == 0
        assert (out / "policy.json").exists()
        assert (out / "training_curve.csv").exists()

    def test_policy_feeds_evaluate(self, tmp_path):
        config_path = small_config_file(tmp_path, total_steps=256)
        out = tmp_path / "trained"
        with redirect_stdout(io.StringIO()):
            assert main(["train", "--config", str(config_path),
                         "--out", str(out)]) == 0
            code = main(["evaluate", "--config", str(config_path),
                         "--policy", str(out / "policy.json"),
                         "--out", str(tmp_path / "eval")])
        assert code == 0


class TestSweep:
    def test_grid_csv(self, tmp_path):
        config_path = small_config_file(tmp_path, episodes=1)
        out = tmp_path / "sweep"
        with redirect_stdout(io.StringIO()):
            code = main(["sweep", "--config", str(config_path),
                         "--out", str(out),
                         "--capacity", "1", "2", "--epsilon", "1e-2"])
        assert code == 0
        rows = list(csv.DictReader((out / "sweep.csv").open()))
        assert len(rows) == 2
        assert {row["capacity"] for row in rows} == {"1", "2"}
