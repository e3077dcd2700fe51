import filecmp
import json
import subprocess
import sys

import pytest

from eegemotion.cli import main
from eegemotion.realtime import validate_event_line

SPEC = """[synthetic]
n_subjects = 2
n_trials = 9
trial_length_s = 12
channels = Fp1, F7, FC5, FC6, T7, T8, P7, O2, Fp2, C3, C4, P8, O1
"""

CONFIG = """[meta]
schema_version = 1

[windows]
train_step_s = 1
selection_step_s = 1

[model]
n_trees = 20
run_sweep = false

[split]
folds = 3

[data]
dir = data
"""


def run(*args, check=True):
    p = subprocess.run([sys.executable, "-m", "eegemotion", *args], capture_output=True, text=True, timeout=300)
    if check and p.returncode != 0:
        raise AssertionError(p.stderr)
    return p


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "spec.ini").write_text(SPEC)
    (d / "config.ini").write_text(CONFIG)
    run("generate-synthetic", "--spec", str(d / "spec.ini"), "--out", str(d / "data"), "--seed", "7")
    out = run("train", "--config", str(d / "config.ini"), "--run-dir", str(d / "run"))
    return d, out


def tree_equal(a, b):
    cmp = filecmp.dircmp(a, b)
    if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
        return False
    same, diff, err = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    return not diff and not err and all(tree_equal(a / s, b / s) for s in cmp.common_dirs)


def test_version():
    assert run("--version").stdout.strip() == "eegemotion 0.1.0"


def test_generate_synthetic_is_byte_identical(workspace, tmp_path):
    d, _ = workspace
    run("generate-synthetic", "--spec", str(d / "spec.ini"), "--out", str(tmp_path / "again"), "--seed", "7")
    assert tree_equal(d / "data", tmp_path / "again")


def test_train_outputs(workspace):
    d, out = workspace
    key, value = out.stdout.strip().split("\t")
    assert key == "average_accuracy" and float(value) > 0.8
    run_dir = d / "run"
    for rel in (
        "models/model.bin", "config/config.ini", "logs/train.log", "tables/cv_metrics.tsv",
        "tables/cv_confusion.tsv", "tables/top_features.tsv", "tables/emotion_map.tsv",
        "tables/provenance.json", "figures/cv_confusion.png",
    ):
        assert (run_dir / rel).exists(), rel
    assert "level=INFO" in out.stderr and "module=eegemotion.cli" in out.stderr
    assert "training pooled" in (run_dir / "logs/train.log").read_text()


def test_train_rerun_is_byte_identical(workspace, tmp_path):
    d, _ = workspace
    run("train", "--config", str(d / "config.ini"), "--run-dir", str(tmp_path / "run2"))
    for sub in ("tables", "figures", "models", "config"):
        assert tree_equal(d / "run" / sub, tmp_path / "run2" / sub), sub


def test_existing_run_dir_needs_force(workspace):
    d, _ = workspace
    p = run("train", "--config", str(d / "config.ini"), "--run-dir", str(d / "run"), check=False)
    assert p.returncode == 1 and "kind=FileExistsError" in p.stderr


def test_evaluate(workspace, tmp_path):
    d, _ = workspace
    p = run("evaluate", "--config", str(d / "config.ini"), "--model", str(d / "run/models/model.bin"), "--run-dir", str(tmp_path / "ev"))
    assert float(p.stdout.split("\t")[1]) > 0.8
    assert (tmp_path / "ev/tables/eval_metrics.tsv").exists()


def test_stream_replay_max(workspace):
    d, _ = workspace
    rec = sorted((d / "data").glob("*.eegr"))[0]
    p = run("stream", "--model", str(d / "run/models/model.bin"), "--replay", str(rec), "--speed", "max")
    lines = p.stdout.splitlines()
    assert len(lines) == 12 // 5
    for ln in lines:
        validate_event_line(ln)
    assert json.loads(lines[0])["window_end_t"] == 5.0


def test_features_and_preprocess(workspace, tmp_path):
    d, _ = workspace
    run("features", "--config", str(d / "config.ini"), "--run-dir", str(tmp_path / "f"), "--step-s", "2.5")
    header = [ln for ln in (tmp_path / "f/tables/features.tsv").read_text().splitlines() if not ln.startswith("#")][0]
    assert header.split("\t")[0] == "delta_Fp1" and len(header.split("\t")) == 72 + 6
    run("preprocess", "--config", str(d / "config.ini"), "--run-dir", str(tmp_path / "p"), "--channels", "runtime")


def test_sweep_window(workspace, tmp_path):
    d, _ = workspace
    cfg = tmp_path / "c.ini"
    text = CONFIG.replace("dir = data", f"dir = {d / 'data'}")
    cfg.write_text(text.replace("selection_step_s = 1", "selection_step_s = 1\nsweep_lengths = 2, 4"))
    p = run("sweep-window", "--config", str(cfg), "--run-dir", str(tmp_path / "s"))
    assert float(p.stdout) in (2.0, 4.0)
    assert (tmp_path / "s/figures/window_sweep.png").exists()


def test_select_channels_needs_32_channels(workspace, tmp_path):
    d, _ = workspace
    p = run("select-channels", "--config", str(d / "config.ini"), "--run-dir", str(tmp_path / "sc"), check=False)
    assert p.returncode == 1 and "kind=DomainError" in p.stderr and "32 channels" in p.stderr


def test_config_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[meta]\nschema_version = 1\n[model]\nn_trees = lots\n")
    assert main(["train", "--config", str(bad), "--data", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error: kind=config field=model.n_trees")


def test_missing_data_is_config_error(capsys):
    assert main(["train"]) == 2
    assert "field=data.dir" in capsys.readouterr().err


def test_bad_flags_exit_2():
    assert run("stream", "--model", "x", check=False).returncode == 2
    assert run("nonsense", check=False).returncode == 2


def test_stream_bad_replay_file(workspace, tmp_path, capsys):
    d, _ = workspace
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"not a stream")
    assert main(["stream", "--model", str(d / "run/models/model.bin"), "--replay", str(junk)]) == 1
    err = capsys.readouterr().err
    assert "kind=WireFormatError" in err and "offset 0" in err
