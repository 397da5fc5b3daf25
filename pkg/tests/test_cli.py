import json

import numpy as np
import pytest

from facereenact import cli
from facereenact.pipeline.imageio import read_image
from facereenact.pipeline.training import NumericalAbort, Trainer

TINY_INI = """[train]
resolution = 32
width_scale = 0.0625
n_identities = 3
frames_per_identity = 2
steps = 2
log_every = 0
checkpoint_every = 1
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "tiny.ini").write_text(TINY_INI)
    assert cli.main(["synth-data", "--out", str(root / "data"), "--identities", "2", "--frames", "2",
                     "--seed", "5", "--resolution", "32"]) == 0
    assert cli.main(["train", "--config", str(root / "tiny.ini"), "--out", str(root / "m.ckpt")]) == 0
    return root


def test_synth_data_outputs(workspace):
    data = workspace / "data"
    assert sorted(p.name for p in data.glob("*.png")) == [
        "id0000_f00.png", "id0000_f01.png", "id0001_f00.png", "id0001_f01.png"]
    assert len(json.loads((data / "params.json").read_text())) == 4
    assert (data / "manifest.csv").read_text().count("\n") == 1 + 2 + 2
    assert read_image(data / "id0000_f00.png").shape == (3, 32, 32)


def test_train_writes_checkpoint_and_resumes(workspace, tmp_path):
    assert Trainer.load(workspace / "m.ckpt").step == 2
    (tmp_path / "more.ini").write_text(TINY_INI.replace("steps = 2", "steps = 3"))
    out = tmp_path / "r.ckpt"
    assert cli.main(["train", "--config", str(tmp_path / "more.ini"), "--resume", str(workspace / "m.ckpt"),
                     "--out", str(out)]) == 0
    assert Trainer.load(out).step == 3


def test_reenact(workspace, tmp_path):
    data = workspace / "data"
    args = ["reenact", "--ckpt", str(workspace / "m.ckpt"), "--source", str(data / "id0000_f00.png"),
            "--source-lm", str(data / "id0000_f00.txt"), "--driving-lm", str(data / "id0001_f01.txt")]
    assert cli.main(args + ["--out", str(tmp_path / "a.png")]) == 0
    assert cli.main(args + ["--out", str(tmp_path / "b.png")]) == 0
    a, b = read_image(tmp_path / "a.png"), read_image(tmp_path / "b.png")
    assert a.shape == (3, 32, 32)
    np.testing.assert_array_equal(a, b)


def test_eval_report(workspace, tmp_path):
    report = tmp_path / "report.txt"
    assert cli.main(["eval", "--ckpt", str(workspace / "m.ckpt"), "--manifest",
                     str(workspace / "data" / "manifest.csv"), "--report", str(report)]) == 0
    record = json.loads((tmp_path / "report.txt.json").read_text())
    assert record["summary"]["pairs"] == 4
    assert "mean_model_l1" in report.read_text()


@pytest.mark.parametrize("argv", [[], ["train"], ["frobnicate"], ["synth-data", "--out", "x", "--identities",
                                                                  "two", "--frames", "2", "--seed", "0"]])
def test_usage_errors_exit_1(argv, capsys):
    assert cli.main(argv) == 1


def test_data_errors_exit_2(workspace, tmp_path, capsys):
    (tmp_path / "bad.ini").write_text("[train]\nlearning_rate = 1\n")
    assert cli.main(["train", "--config", str(tmp_path / "bad.ini"), "--out", str(tmp_path / "x")]) == 2
    assert "learning_rate" in capsys.readouterr().err
    (tmp_path / "junk.ckpt").write_bytes(b"junk")
    assert cli.main(["eval", "--ckpt", str(tmp_path / "junk.ckpt"), "--manifest", "m.csv",
                     "--report", str(tmp_path / "r")]) == 2
    (tmp_path / "bad.txt").write_text("1 2\nthree 4\n")
    data = workspace / "data"
    assert cli.main(["reenact", "--ckpt", str(workspace / "m.ckpt"), "--source", str(data / "id0000_f00.png"),
                     "--source-lm", str(tmp_path / "bad.txt"), "--driving-lm", str(data / "id0000_f01.txt"),
                     "--out", str(tmp_path / "o.png")]) == 2
    assert not (tmp_path / "o.png").exists()


def test_numerical_abort_exit_3(workspace, tmp_path, monkeypatch, capsys):
    def boom(self, batch=None):
        raise NumericalAbort("content", self.step)

    monkeypatch.setattr(Trainer, "train_step", boom)
    assert cli.main(["train", "--config", str(workspace / "tiny.ini"), "--out", str(tmp_path / "n.ckpt")]) == 3
    assert "content" in capsys.readouterr().err
