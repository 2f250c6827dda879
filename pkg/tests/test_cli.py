from __future__ import annotations

import filecmp

import pytest

from gazepipe.harness.cli import main
from gazepipe.harness.report import read_report_overall


@pytest.fixture(scope="module")
def archive(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--persons", "3", "--samples", "15", "--seed", "4", "--out-dir", str(out)]) == 0
    return out


def _same_tree(a, b, ignore=()):
    cmp = filecmp.dircmp(a, b, ignore=list(ignore))
    assert not cmp.left_only and not cmp.right_only
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    assert not mismatch and not errors
    for d in cmp.common_dirs:
        _same_tree(a / d, b / d)


def test_synth_is_deterministic(archive, tmp_path):
    assert main(["synth", "--persons", "3", "--samples", "15", "--seed", "4", "--out-dir", str(tmp_path)]) == 0
    _same_tree(archive, tmp_path)
    assert (archive / "truth.csv").read_text().count("\n") == 1 + 3 * 15 * 2


def test_raw_then_normalize(tmp_path):
    assert main(["synth", "--persons", "2", "--samples", "3", "--out-dir", str(tmp_path), "--raw"]) == 0
    assert main(["normalize", "--input", str(tmp_path / "raw"), "--out-dir", str(tmp_path / "norm")]) == 0
    _same_tree(tmp_path / "archive", tmp_path / "norm", ignore=["failures.tsv"])


def test_lopo_eval_and_report(archive, tmp_path):
    out = tmp_path / "ev"
    rc = main(["eval", "--train", str(archive / "archive"), "--estimator", "knn", "--out-dir", str(out),
               "--fuse-eyes"])  # fmt: skip
    assert rc == 0
    for name in ("report.csv", "predictions.csv", "bins_gaze_yaw.csv", "fusion.csv", "run-config.txt",
                 "footnotes.txt", "plots/per_person.svg"):  # fmt: skip
        assert (out / name).exists(), name
    assert main(["report", "--in-dir", str(out), "--out-dir", str(tmp_path / "re")]) == 0
    a, b = read_report_overall(out / "report.csv"), read_report_overall(tmp_path / "re" / "report.csv")
    assert abs(a - b) <= 1e-12


def test_train_then_eval_model(archive, tmp_path):
    a = str(archive / "archive")
    rc = main(["train", "--train", a, "--estimator", "cnn", "--iterations", "3", "--batch-size", "8",
               "--out-dir", str(tmp_path / "m")])  # fmt: skip
    assert rc == 0
    assert (tmp_path / "m" / "loss.csv").read_text().count("\n") == 4
    rc = main(["eval", "--model", str(tmp_path / "m" / "model.ckpt"), "--test", a, "--out-dir", str(tmp_path / "e")])
    assert rc == 0


def test_resolution_grid_output(archive, tmp_path):
    a = str(archive / "archive")
    rc = main(["eval", "--train", a, "--test", a, "--protocol", "cross", "--estimator", "linear",
               "--resolutions", "60x36,15x9", "--out-dir", str(tmp_path)])  # fmt: skip
    assert rc == 0
    lines = (tmp_path / "grid.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[0].endswith("60x36,15x9")


def test_exit_codes(archive, tmp_path, capsys):
    a = archive / "archive"
    one = tmp_path / "one"
    assert main(["synth", "--persons", "1", "--samples", "3", "--out-dir", str(one)]) == 0
    assert main(["eval", "--train", str(one / "archive"), "--out-dir", str(tmp_path / "x")]) == 1
    assert "TooFewPersons" in capsys.readouterr().err
    assert main(["eval", "--train", str(a), "--protocol", "cross", "--out-dir", str(tmp_path / "w")]) == 1
    assert main(["eval", "--bogus"]) == 1
    assert main(["eval", "--train", str(tmp_path / "missing"), "--out-dir", str(tmp_path / "y")]) == 1
    assert main(["report", "--in-dir", str(tmp_path)]) == 1


def test_runtime_failure_exit_code(archive, tmp_path, capsys):
    rc = main(["train", "--train", str(archive / "archive"), "--estimator", "linear", "--ridge", "0",
               "--out-dir", str(tmp_path)])  # fmt: skip
    assert rc == 2
    assert "SingularSystem" in capsys.readouterr().err
