import shutil

import numpy as np
import pytest
from numpy.lib.stride_tricks import sliding_window_view
from PIL import Image

from conftest import FIXTURES
from synthdetect.checkpoint import load_checkpoint, save_checkpoint
from synthdetect.config import build_config
from synthdetect.errors import ArgumentError, ContractError
from synthdetect.evaluation import ConfusionMatrix
from synthdetect.pipelines import (EXIT_DIVERGED, EXIT_OK, config_from_checkpoint, evaluate_command,
                                   report_from_paths, run_experiment)

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")

GOLDEN = FIXTURES / "golden"
ARTIFACTS = ("config.txt", "trainlog.csv", "model.ckpt", "report.txt", "report.kv", "confusion.csv", "roc.csv",
             "pr.csv")

SMALL = {
    "SVM": {},
    "CUSTOM_CNN": {"train.epochs": "2", "train.batch_size": "4"},
    "TINY_RESNET": {"train.epochs": "2", "train.batch_size": "4", "model.stages": "4,8"},
    "TINY_VGG": {"train.epochs": "2", "train.batch_size": "4", "model.stages": "4,8", "model.hidden": "8"},
    "TINY_DENSENET": {"train.epochs": "2", "train.batch_size": "4", "model.growth": "4", "model.stem": "4",
                      "model.dense_layers": "2"},
}


def small_config(pipeline, **extra):
    raw = {"pipeline": pipeline, "data.synthetic": "true", "data.train_per_class": "6",
           "data.test_per_class": "4", "seed": "5", **SMALL[pipeline], **extra}
    return build_config(raw)


def read_all(d):
    return {name: (d / name).read_bytes() for name in ARTIFACTS}


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.parametrize("pipeline", sorted(SMALL))
def test_runs_are_byte_identical(pipeline, tmp_path):
    cfg = small_config(pipeline)
    a = run_experiment(cfg, tmp_path / "a")
    b = run_experiment(cfg, tmp_path / "b")
    assert a.status == b.status == EXIT_OK
    assert read_all(tmp_path / "a") == read_all(tmp_path / "b")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
@pytest.mark.parametrize("pipeline", sorted(SMALL))
def test_evaluate_matches_training_report(pipeline, tmp_path):
    res = run_experiment(small_config(pipeline), tmp_path / "run")
    evaluate_command(tmp_path / "run" / "model.ckpt", tmp_path / "eval")
    for name in ("report.kv", "confusion.csv", "roc.csv", "pr.csv"):
        assert (tmp_path / "eval" / name).read_bytes() == (tmp_path / "run" / name).read_bytes()
    meta = load_checkpoint(tmp_path / "run" / "model.ckpt").metadata
    assert float(meta["metric.accuracy"]) == res.report.accuracy
    if pipeline != "SVM":
        assert res.log.records[-1].test_acc == res.report.accuracy


def test_config_snapshot_reproduces_run(tmp_path):
    first = run_experiment(small_config("CUSTOM_CNN"), tmp_path / "a")
    snap = config_from_checkpoint(load_checkpoint(tmp_path / "a" / "model.ckpt"))
    assert snap.to_text() == (first.out_dir / "config.txt").read_text()
    run_experiment(snap, tmp_path / "b")
    assert read_all(tmp_path / "a") == read_all(tmp_path / "b")


def test_different_seed_changes_weights(tmp_path):
    run_experiment(small_config("CUSTOM_CNN"), tmp_path / "a")
    run_experiment(small_config("CUSTOM_CNN", seed="6"), tmp_path / "b")
    assert (tmp_path / "a" / "model.ckpt").read_bytes() != (tmp_path / "b" / "model.ckpt").read_bytes()


def test_svm_trainlog_and_checkpoint(tmp_path):
    res = run_experiment(small_config("SVM"), tmp_path)
    rows = (tmp_path / "trainlog.csv").read_text().splitlines()
    assert len(rows) == 2 and rows[1].startswith("0,0.0,")
    meta = load_checkpoint(tmp_path / "model.ckpt").metadata
    assert meta["preprocess"] == "hog" and meta["svm.converged"] == "true"
    assert res.report.total == 8


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_exit_code_and_partial_artifacts(tmp_path):
    res = run_experiment(small_config("CUSTOM_CNN", **{"train.lr": "1e30"}), tmp_path)
    assert res.status == EXIT_DIVERGED and res.report is None
    assert (tmp_path / "trainlog.csv").exists() and (tmp_path / "model.ckpt").exists()
    assert load_checkpoint(tmp_path / "model.ckpt").metadata["status"] == "diverged"
    assert not (tmp_path / "report.txt").exists()


def test_evaluate_rejects_mismatched_preprocessing(tmp_path):
    run_experiment(small_config("CUSTOM_CNN"), tmp_path / "run")
    ckpt = load_checkpoint(tmp_path / "run" / "model.ckpt")
    ckpt.metadata["preprocess"] = "augment"
    save_checkpoint(tmp_path / "bad.ckpt", ckpt)
    with pytest.raises(ContractError):
        evaluate_command(tmp_path / "bad.ckpt", tmp_path / "eval")


def test_evaluate_empty_test_directory(tmp_path):
    root = tmp_path / "data"
    for s in ("train", "test"):
        for lab in ("FAKE", "REAL"):
            (root / s / lab).mkdir(parents=True)
    with pytest.raises(ArgumentError):
        evaluate_command(GOLDEN / "model.ckpt", tmp_path / "eval", root=root)


def test_golden_report_is_byte_identical(tmp_path):
    evaluate_command(GOLDEN / "model.ckpt", tmp_path, root=GOLDEN / "data")
    for name in ("report.txt", "report.kv", "confusion.csv"):
        assert (tmp_path / name).read_bytes() == (GOLDEN / name).read_bytes(), name


def _reference_forward(arrays, gray):
    """Custom CNN forward written directly in numpy (float64), independent of
    the tensor engine: valid 3×3 cross-correlation, 2×2 max pooling, two
    affine layers, sigmoid."""
    w, b = arrays["features.layers.0.weight"].astype(np.float64), arrays["features.layers.0.bias"]
    win = sliding_window_view(gray, (3, 3), axis=(1, 2))  # N×30×30×3×3
    conv = np.einsum("nhwij,fij->nfhw", win, w[:, 0]) + b[None, :, None, None]
    act = np.maximum(conv, 0)
    pooled = act.reshape(act.shape[0], 32, 15, 2, 15, 2).max(axis=(3, 5))
    h = np.maximum(pooled.reshape(len(gray), -1) @ arrays["features.layers.4.weight"]
                   + arrays["features.layers.4.bias"], 0)
    z = h @ arrays["head.weight"] + arrays["head.bias"]
    return 1 / (1 + np.exp(-z[:, 0]))


def test_golden_confusion_matches_independent_forward():
    arrays = load_checkpoint(GOLDEN / "model.ckpt").arrays
    counts = np.zeros((2, 2), dtype=int)
    for i, lab in enumerate(("FAKE", "REAL")):
        files = sorted((GOLDEN / "data" / "test" / lab).glob("*.png"))
        rgb = np.stack([np.asarray(Image.open(f).convert("RGB"), dtype=np.float64) for f in files])
        gray = np.floor(0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2] + 0.5) / 255.0
        p = _reference_forward(arrays, gray)
        counts[i] = [(p >= 0.5).sum(), (p < 0.5).sum()]
    golden = ConfusionMatrix.from_csv((GOLDEN / "confusion.csv").read_text())
    assert golden.as_array().tolist() == counts.tolist()


def test_report_command_combines_runs(tmp_path):
    shutil.copytree(GOLDEN, tmp_path / "golden", ignore=shutil.ignore_patterns("data"))
    text = report_from_paths([tmp_path / "golden", FIXTURES / "published_confusion" / "densenet.csv"])
    assert "CUSTOM_CNN" in text and "densenet" in text and "0.98" in text
    with pytest.raises(ArgumentError):
        report_from_paths([])

