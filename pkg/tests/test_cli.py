"""
Command-line surface: subcommands, outputs and exit codes.
"""

import json

import numpy as np
import pytest

from main import main
from occflow.render import read_ppm


def run(tmp_path, *argv):
    return main(["--scale", "micro", "--out", str(tmp_path), *argv])


@pytest.fixture
def trained(tmp_path):
    assert run(tmp_path, "train", "--count", "1", "--agents", "2", "--epochs", "1") == 0
    return tmp_path / "checkpoints" / "epoch_000.ofk"


class TestGen:
    def test_writes_numbered_files(self, tmp_path):
        assert run(tmp_path, "--seed", "7", "gen", "--count", "2", "--agents", "2", "--layout", "cross") == 0
        names = sorted(p.name for p in (tmp_path / "scenarios").iterdir())
        assert names == ["scenario_000007.json", "scenario_000008.json"]

    def test_infeasible_spec(self, tmp_path):
        assert run(tmp_path, "gen", "--agents", "9") == 1


class TestEval:
    def test_oracle_report(self, tmp_path, capsys):
        assert run(tmp_path, "eval", "--oracle", "--count", "2", "--agents", "2") == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["flow_epe"] == 0.0
        assert json.loads(capsys.readouterr().out) == report

    def test_stored_scenarios(self, tmp_path):
        assert run(tmp_path, "gen", "--count", "2", "--agents", "2") == 0
        assert run(tmp_path, "eval", "--oracle", "--scenarios", str(tmp_path / "scenarios")) == 0

    def test_scenarios_from_other_scale(self, tmp_path):
        assert main(["--scale", "desk", "--out", str(tmp_path), "gen", "--count", "1", "--agents", "2"]) == 0
        assert run(tmp_path, "eval", "--oracle", "--scenarios", str(tmp_path / "scenarios")) == 1

    def test_empty_scenario_directory(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert run(tmp_path, "eval", "--oracle", "--scenarios", str(tmp_path / "empty")) == 2

    def test_needs_checkpoint_or_oracle(self, tmp_path):
        assert run(tmp_path, "eval", "--agents", "2") == 1

    def test_checkpoint(self, tmp_path, trained):
        assert run(tmp_path, "eval", "--checkpoint", str(trained), "--count", "1", "--agents", "2") == 0
        assert set(json.loads((tmp_path / "report.json").read_text())) >= {"observed_auc", "ft_soft_iou"}


class TestTrainPredictRender:
    def test_train_outputs(self, tmp_path, trained):
        curve = json.loads((tmp_path / "loss_curve.json").read_text())
        assert curve["config"]["name"] == "micro"
        assert len(curve["losses"]) == 1
        assert trained.exists()

    def test_predict(self, tmp_path, trained):
        assert run(tmp_path, "predict", "--checkpoint", str(trained), "--render") == 0
        with np.load(tmp_path / "predictions.npz") as data:
            assert data["obs"].shape == (2, 32, 32)
            assert data["flow"].shape == (2, 32, 32, 2)
        assert read_ppm(str(tmp_path / "render" / "trace_2.ppm")).shape == (32, 32, 3)

    def test_render_ground_truth(self, tmp_path):
        assert run(tmp_path, "--seed", "3", "render") == 0
        assert (tmp_path / "render" / "gt_flow_1.ppm").exists()

    def test_checkpoint_from_other_scale(self, tmp_path, trained):
        assert main(["--scale", "desk", "--out", str(tmp_path), "predict", "--checkpoint", str(trained)]) == 2


class TestErrors:
    def test_no_command(self, tmp_path):
        assert main(["--out", str(tmp_path)]) == 1

    def test_negative_seed(self, tmp_path):
        assert run(tmp_path, "--seed", "-1", "gen", "--agents", "2") == 1

    def test_missing_checkpoint(self, tmp_path):
        assert run(tmp_path, "predict", "--checkpoint", str(tmp_path / "none.ofk")) == 2

    def test_missing_config_file(self, tmp_path):
        assert run(tmp_path, "--config", str(tmp_path / "none.json"), "gen") == 2

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"grid": 3}))
        assert run(tmp_path, "--config", str(cfg), "gen") == 1

    def test_config_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"T_f": 3}))
        assert run(tmp_path, "--config", str(cfg), "gen", "--count", "1", "--agents", "2") == 0
        data = json.loads((tmp_path / "scenarios" / "scenario_000000.json").read_text())
        assert data["timing"]["future_steps"] == 3


class TestSelfChecks:
    def test_gradcheck_without_model(self, tmp_path, capsys):
        assert run(tmp_path, "gradcheck", "--skip-model") == 0
        assert "gradient checks passed" in capsys.readouterr().out

    def test_selftest(self, tmp_path, capsys):
        assert run(tmp_path, "selftest") == 0
        assert "self-test suites passed" in capsys.readouterr().out
