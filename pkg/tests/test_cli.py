import json

import pytest

from skdsrl.cli import main

TINY_CONFIG = {
    "synthetic": {"videos_per_class": 4, "frames": 12, "height": 64, "width": 64, "seed": 2},
    "augment": {"clip_len": 6},
    "train": {"max_epochs": 1, "batch_size": 4},
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Shared directory with a config file and a generated dataset."""
    root = tmp_path_factory.mktemp("cli")
    cfg_path = root / "config.json"
    cfg_path.write_text(json.dumps(TINY_CONFIG))
    data_dir = root / "data"
    rc = main(["gen-data", "--config", str(cfg_path), "--out", str(data_dir)])
    assert rc == 0
    return root


class TestGenData:
    def test_layout_written(self, workdir):
        data = workdir / "data"
        assert (data / "classes.txt").exists()
        assert (data / "index.csv").exists()
        assert (data / "config.resolved.json").exists()
        index = (data / "index.csv").read_text().splitlines()
        assert len(index) == 1 + 16  # header + 4 classes x 4 videos

    def test_config_echo_is_fully_resolved(self, workdir):
        doc = json.loads((workdir / "data" / "config.resolved.json").read_text())
        assert set(doc) == {"synthetic", "augment", "model", "train", "hyperparams"}
        assert doc["synthetic"]["videos_per_class"] == 4
        assert doc["hyperparams"]["tau"] == 10.0  # default filled in
        assert "metrics_path" not in doc["train"]


class TestTrain:
    def test_zero_epochs_writes_empty_metrics(self, workdir, tmp_path):
        cfg = dict(TINY_CONFIG, train={"max_epochs": 0, "batch_size": 4})
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(cfg))
        out = tmp_path / "run0"
        rc = main(["train", "--config", str(cfg_path), "--data", str(workdir / "data"), "--out", str(out)])
        assert rc == 0
        assert (out / "metrics.jsonl").read_text() == ""

    def test_one_epoch_run_and_eval(self, workdir, capsys):
        out = workdir / "run1"
        rc = main([
            "train", "--config", str(workdir / "config.json"),
            "--data", str(workdir / "data"), "--out", str(out),
        ])
        assert rc == 0
        lines = (out / "metrics.jsonl").read_text().splitlines()
        assert len(lines) == 1
        assert (out / "last.ckpt.npz").exists()
        rc = main([
            "eval", "--checkpoint", str(out / "last.ckpt.npz"),
            "--data", str(workdir / "data"), "--split", "val",
            "--config", str(workdir / "config.json"),
        ])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "top1_accuracy[val]" in printed

    def test_missing_data_dir_is_error_exit(self, workdir, tmp_path, capsys):
        rc = main(["train", "--config", str(workdir / "config.json"),
                   "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
        assert rc == 1
        assert "error:" in capsys.readouterr().err


class TestConfigErrors:
    def test_unknown_key_exit_2_names_path(self, workdir, tmp_path, capsys):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"train": {"learning_rate": 0.1}}))
        rc = main(["gen-data", "--config", str(cfg_path), "--out", str(tmp_path / "d")])
        assert rc == 2
        assert "train.learning_rate" in capsys.readouterr().err

    def test_unknown_section_exit_2(self, workdir, tmp_path, capsys):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"optimizer": {}}))
        rc = main(["gen-data", "--config", str(cfg_path), "--out", str(tmp_path / "d")])
        assert rc == 2
        assert "optimizer" in capsys.readouterr().err

    def test_malformed_json_exit_2(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text("{not json")
        rc = main(["gen-data", "--config", str(cfg_path), "--out", str(tmp_path / "d")])
        assert rc == 2

    def test_reserved_train_key_rejected(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.json"
        cfg_path.write_text(json.dumps({"train": {"metrics_path": "/tmp/x"}}))
        rc = main(["gen-data", "--config", str(cfg_path), "--out", str(tmp_path / "d")])
        assert rc == 2
        assert "train.metrics_path" in capsys.readouterr().err


class TestCompare:
    def test_tiny_compare_writes_report(self, workdir, capsys):
        out = workdir / "cmp"
        rc = main([
            "compare", "--config", str(workdir / "config.json"),
            "--data", str(workdir / "data"),
            "--mechanisms", "baseline,skd_srl", "--seeds", "1",
            "--out", str(out),
        ])
        assert rc == 0
        assert (out / "runs.csv").exists() and (out / "summary.txt").exists()
        printed = capsys.readouterr().out
        assert "skd_srl" in printed

    def test_unknown_mechanism_exit_2(self, workdir, tmp_path, capsys):
        rc = main([
            "compare", "--data", str(workdir / "data"),
            "--mechanisms", "baseline,wizardry", "--out", str(tmp_path / "o"),
        ])
        assert rc == 2
        assert "wizardry" in capsys.readouterr().err


class TestSelfcheck:
    def test_selfcheck_passes(self, capsys):
        rc = main(["selfcheck", "--seed", "0"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "[PASS]" in out and "[FAIL]" not in out
