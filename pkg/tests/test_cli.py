import json
import subprocess
import sys

import numpy as np
import pytest

from kpruning.cli import main

CLI = [sys.executable, "-m", "kpruning.cli"]


def run_cli(*args, env_seed=None):
    import os

    env = dict(os.environ)
    env.pop("KPRUNING_SEED", None)
    if env_seed is not None:
        env["KPRUNING_SEED"] = str(env_seed)
    proc = subprocess.run(CLI + list(args), capture_output=True, text=True, env=env)
    return proc


def lines_of(stdout):
    return [json.loads(line) for line in stdout.splitlines() if line.strip()]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """A tiny end-to-end workspace: anchors, data, config, checkpoint."""
    root = tmp_path_factory.mktemp("cli")
    anchors = root / "anchors.jsonl"
    data = root / "data.csv"
    config = root / "train.cfg"
    ckpt = root / "model.ckpt"
    r = run_cli("gen-anchors", "--range", "0:40:1", "--dim", "16", "--seed", "3",
                "--out", str(anchors))
    assert r.returncode == 0, r.stderr
    r = run_cli("synth-data", "--kind", "regression", "--units", "8", "--length", "12",
                "--noise", "0.1", "--r-max", "40", "--seed", "5", "--out", str(data))
    assert r.returncode == 0, r.stderr
    config.write_text(
        "epochs = 2\n"
        "batch_size = 16\n"
        "window_length = 12\n"
        "r_max = 40.0\n"
        "encoder.kind = \"mlp\"\n"
        "encoder.hidden = [16]\n"
        "encoder.feature_dim = 8\n"
    )
    r = run_cli("train", "--config", str(config), "--data", str(data),
                "--anchors", str(anchors), "--out", str(ckpt))
    assert r.returncode == 0, r.stderr
    return {"root": root, "anchors": anchors, "data": data, "config": config, "ckpt": ckpt}


class TestGenAnchors:
    def test_range_count_and_dim(self, tmp_path):
        out = tmp_path / "a.jsonl"
        r = run_cli("gen-anchors", "--range", "0:125:1", "--dim", "16", "--out", str(out))
        assert r.returncode == 0
        event = lines_of(r.stdout)[0]
        assert event["count"] == 126 and event["dim"] == 16

    def test_classes_use_subject_template(self, tmp_path):
        out = tmp_path / "c.jsonl"
        r = run_cli("gen-anchors", "--classes", "walking,sitting", "--dim", "8",
                    "--out", str(out))
        assert r.returncode == 0
        header = json.loads(out.read_text().splitlines()[0])
        assert header["template"] == "The subject is {action}."
        assert lines_of(r.stdout)[0]["count"] == 2

    def test_invalid_range_is_usage_error(self, tmp_path):
        r = run_cli("gen-anchors", "--range", "5:3:1", "--out", str(tmp_path / "x"))
        assert r.returncode == 1

    def test_both_selectors_rejected(self, tmp_path):
        r = run_cli("gen-anchors", "--range", "0:5:1", "--classes", "a,b",
                    "--out", str(tmp_path / "x"))
        assert r.returncode == 1

    def test_unknown_flag_rejected(self, tmp_path):
        r = run_cli("gen-anchors", "--range", "0:5:1", "--out", str(tmp_path / "x"),
                    "--bogus", "1")
        assert r.returncode == 1

    def test_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        for out in (a, b):
            assert run_cli("gen-anchors", "--range", "0:10:1", "--dim", "8", "--seed", "7",
                           "--out", str(out)).returncode == 0
        assert a.read_bytes() == b.read_bytes()

    def test_env_seed_override(self, tmp_path):
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        run_cli("gen-anchors", "--classes", "x,y", "--dim", "8", "--out", str(a), env_seed=9)
        run_cli("gen-anchors", "--classes", "x,y", "--dim", "8", "--seed", "9", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_synth_data_rerun_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            r = run_cli("synth-data", "--kind", "classification", "--n-classes", "2",
                        "--samples-per-class", "3", "--length", "16", "--seed", "4",
                        "--out", str(out))
            assert r.returncode == 0
        assert a.read_bytes() == b.read_bytes()


class TestTrainEvalPredict:
    def test_train_emits_epoch_lines_and_history(self, workspace):
        history = workspace["root"] / "model.ckpt.history.jsonl"
        assert history.exists()
        records = [json.loads(line) for line in history.read_text().splitlines()]
        assert len(records) == 2
        assert all("loss" in r and "epoch" in r for r in records)

    def test_eval_reports_metrics(self, workspace):
        r = run_cli("eval", "--checkpoint", str(workspace["ckpt"]), "--data",
                    str(workspace["data"]), "--split", "test")
        assert r.returncode == 0, r.stderr
        metrics = lines_of(r.stdout)[0]
        assert metrics["task"] == "regression"
        assert metrics["rmse"] >= 0.0
        assert metrics["nasa_score"] is not None

    def test_predict_bounds_and_explain(self, workspace):
        r = run_cli("predict", "--checkpoint", str(workspace["ckpt"]), "--input",
                    str(workspace["data"]), "--theta", "0.9", "--explain")
        assert r.returncode == 0, r.stderr
        rows = lines_of(r.stdout)
        assert rows
        for row in rows:
            assert 0.0 <= row["prediction"] <= 40.0
            assert row["voting_weight_sum"] >= 0.9 - 1e-9 or len(row["voting_set"]) == 41

    def test_predict_theta_variants(self, workspace):
        for theta in ("0.5", "0.9"):
            r = run_cli("predict", "--checkpoint", str(workspace["ckpt"]), "--input",
                        str(workspace["data"]), "--theta", theta)
            assert r.returncode == 0
            assert all(0.0 <= row["prediction"] <= 40.0 for row in lines_of(r.stdout))

    def test_missing_anchor_file_exit_2(self, workspace, tmp_path):
        r = run_cli("train", "--config", str(workspace["config"]), "--data",
                    str(workspace["data"]), "--anchors", str(tmp_path / "nope.jsonl"),
                    "--out", str(tmp_path / "x.ckpt"))
        assert r.returncode == 2

    def test_config_parse_error_exit_1_with_line(self, workspace, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("epochs = 2\nthis is wrong\n")
        r = run_cli("train", "--config", str(bad), "--data", str(workspace["data"]),
                    "--anchors", str(workspace["anchors"]), "--out", str(tmp_path / "x"))
        assert r.returncode == 1
        assert "line 2" in r.stderr

    def test_shape_mismatch_exit_2(self, workspace, tmp_path):
        bad = tmp_path / "narrow.csv"
        bad.write_text("split,unit,step,ch_0,target\n" + "\n".join(
            f"test,u0,{i},{i * 0.1},5.0" for i in range(20)) + "\n")
        r = run_cli("predict", "--checkpoint", str(workspace["ckpt"]), "--input", str(bad))
        assert r.returncode == 2

    def test_train_rerun_byte_identical(self, workspace, tmp_path):
        out1, out2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        for out in (out1, out2):
            r = run_cli("train", "--config", str(workspace["config"]), "--data",
                        str(workspace["data"]), "--anchors", str(workspace["anchors"]),
                        "--out", str(out))
            assert r.returncode == 0
        assert out1.read_bytes() == out2.read_bytes()

    def test_lr_zero_matches_untrained_eval(self, workspace, tmp_path):
        cfg = tmp_path / "zero.cfg"
        cfg.write_text(workspace["config"].read_text() + "learning_rate = 0.0\n")
        frozen, init = tmp_path / "frozen.ckpt", tmp_path / "init.ckpt"
        run_cli("train", "--config", str(cfg), "--data", str(workspace["data"]),
                "--anchors", str(workspace["anchors"]), "--out", str(frozen))
        cfg0 = tmp_path / "zero0.cfg"
        cfg0.write_text(workspace["config"].read_text() + "epochs = 0\n")
        run_cli("train", "--config", str(cfg0), "--data", str(workspace["data"]),
                "--anchors", str(workspace["anchors"]), "--out", str(init))
        m1 = lines_of(run_cli("eval", "--checkpoint", str(frozen), "--data",
                              str(workspace["data"])).stdout)[0]
        m0 = lines_of(run_cli("eval", "--checkpoint", str(init), "--data",
                              str(workspace["data"])).stdout)[0]
        assert m1["rmse"] == m0["rmse"]


class TestInspect:
    def test_inspect_anchor_file(self, workspace):
        r = run_cli("inspect", "--path", str(workspace["anchors"]))
        assert r.returncode == 0
        info = lines_of(r.stdout)[0]
        assert info["kind"] == "anchors" and info["count"] == 41

    def test_inspect_checkpoint(self, workspace):
        r = run_cli("inspect", "--path", str(workspace["ckpt"]))
        assert r.returncode == 0
        info = lines_of(r.stdout)[0]
        assert info["kind"] == "checkpoint" and info["task"] == "regression"
        assert info["n_params"] > 0

    def test_inspect_missing_file(self, tmp_path):
        r = run_cli("inspect", "--path", str(tmp_path / "ghost"))
        assert r.returncode == 2


class TestHelp:
    EXPECTED = {
        "gen-anchors": ["--template", "--classes", "--range", "--mode", "--dim", "--seed", "--out"],
        "synth-data": ["--kind", "--units", "--n-classes", "--samples-per-class", "--noise",
                       "--length", "--r-max", "--seed", "--out"],
        "train": ["--config", "--data", "--anchors", "--out", "--format"],
        "eval": ["--checkpoint", "--data", "--split", "--theta", "--eval-windows", "--format"],
        "predict": ["--checkpoint", "--input", "--theta", "--explain"],
        "inspect": ["--path"],
    }

    @pytest.mark.parametrize("command", sorted(EXPECTED))
    def test_help_documents_every_flag(self, command):
        r = run_cli(command, "--help")
        assert r.returncode == 0
        for flag in self.EXPECTED[command]:
            assert flag in r.stdout, f"{command} help is missing {flag}"

    def test_top_level_lists_subcommands(self):
        r = run_cli("--help")
        assert r.returncode == 0
        for cmd in self.EXPECTED:
            assert cmd in r.stdout


class TestInProcessEntry:
    def test_main_returns_exit_code(self, tmp_path):
        assert main(["gen-anchors", "--range", "0:5:1", "--dim", "8",
                     "--out", str(tmp_path / "a.jsonl")]) == 0
        assert main(["gen-anchors", "--range", "bad", "--out", str(tmp_path / "b")]) == 1
