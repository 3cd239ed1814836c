"""One test per acceptance criterion. Each prints a single PASS/FAIL line
(collected again in the terminal summary) before asserting."""
import time

import numpy as np
import pytest

import gradcheck
from conftest import ACCEPTANCE_LINES, FIXTURES
from test_evaluation import TABLE_ROWS, load, row
from test_pipelines import read_all, small_config
from test_svm import XOR_X, XOR_Y, kkt_violation, random_instance, two_moons
from synthdetect.checkpoint import checkpoint_roundtrip, load_checkpoint, model_checkpoint, save_checkpoint
from synthdetect.config import build_config
from synthdetect.errors import FormatError
from synthdetect.evaluation import classification_report, pr_auc, roc_auc
from synthdetect.models import CUSTOM_CNN, TINY_DENSENET, TINY_RESNET, TINY_VGG, ModelSpec, build_model
from synthdetect.oracles import brute_pr_auc, mann_whitney_auc, projected_gradient_dual
from synthdetect.optim import TrainLog
from synthdetect.pipelines import EXIT_OK, run_experiment
from synthdetect.svm import SvmConfig, kernel_matrix, predict_batch, smo_train
from synthdetect.synthetic import synthetic_split
from synthdetect import tensor as T

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")

DESK_TRAIN, DESK_TEST = 2500, 500  # per class: 5,000 train / 1,000 test
DEEP_EPOCHS = 12  # one StepLR decay at epoch 10


def verdict(n, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{n}] {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def desk_data():
    return synthetic_split(DESK_TRAIN, DESK_TEST, seed=0)


def test_1_metrics_reproduction():
    t0 = time.perf_counter()
    rows_ok = all(row(classification_report(load(k))) == v for k, v in TABLE_ROWS.items() if k != "vgg")
    targets = {"svm": 0.8143, "cnn": 0.8640, "resnet": 0.9495, "densenet": 0.9774}
    worst = max(abs(classification_report(load(k)).accuracy - v) for k, v in targets.items())
    dt = time.perf_counter() - t0
    verdict(1, "metrics reproduction", rows_ok and worst <= 0.00005 and dt < 1.0,
            f"table rows match={rows_ok}, max accuracy gap {worst * 100:.4f}%, {dt:.3f}s")


def test_2_gradient_suite():
    t0 = time.perf_counter()
    cases = gradcheck.all_cases()
    errs = [gradcheck.run_case(*c) for c in cases]
    worst = max(errs)
    dt = time.perf_counter() - t0
    kinds = {c[1] for c in cases}
    verdict(2, "gradient suite", len(cases) >= 100 and worst < 1e-4 and dt < 120,
            f"{len(cases)} configs over {len(kinds)} ops/blocks, max rel. error {worst:.2e}, {dt:.1f}s")


def test_3_auc_oracles():
    rng = np.random.default_rng(2024)
    roc_gap = pr_gap = 0.0
    done = 0
    while done < 1000:
        n = int(rng.integers(2, 51))
        t = rng.random(n) < rng.uniform(0.1, 0.9)
        if t.all() or not t.any():
            continue
        s = rng.integers(0, int(rng.integers(2, 12)), size=n).astype(float) if done % 2 else rng.random(n)
        roc_gap = max(roc_gap, abs(roc_auc(s, t.astype(int)).auc - mann_whitney_auc(s, t)))
        pr_gap = max(pr_gap, abs(pr_auc(s, t.astype(int)) - brute_pr_auc(s, t)))
        done += 1
    verdict(3, "AUC oracle equivalence", roc_gap <= 1e-9 and pr_gap <= 1e-12,
            f"1000 instances, max ROC gap {roc_gap:.1e}, max PR gap {pr_gap:.1e}")


def test_4_svm_correctness():
    t0 = time.perf_counter()
    kkt = obj = 0.0
    for seed in range(20):
        X, y, C, gamma = random_instance(seed)
        m = smo_train(X, y, SvmConfig(C=C, gamma=gamma, tol=1e-3))
        kkt = max(kkt, kkt_violation(m, X, y)[0])
        obj = max(obj, abs(m.objective - projected_gradient_dual(kernel_matrix(X, X, gamma), y, C)[1]))
    X, y = two_moons()
    moons = (predict_batch(smo_train(X, y, SvmConfig(C=1.0, gamma=1.0)), X) == y).mean()
    xor = (predict_batch(smo_train(XOR_X, XOR_Y, SvmConfig(C=10.0, gamma=1.0)), XOR_X) == XOR_Y).mean()
    dt = time.perf_counter() - t0
    verdict(4, "SVM correctness", kkt <= 1e-3 and obj < 1e-4 and moons >= 0.95 and xor == 1.0 and dt < 60,
            f"max KKT violation {kkt:.1e}, max dual gap {obj:.1e}, two-moons {moons:.3f}, XOR {xor:.2f}, "
            f"{dt:.1f}s")


@pytest.mark.slow
def test_5_desk_scale_cnn(desk_data, tmp_path):
    cfg = build_config({"pipeline": "CUSTOM_CNN", "data.synthetic": "true", "data.train_per_class": str(DESK_TRAIN),
                        "data.test_per_class": str(DESK_TEST), "train.epochs": "10", "train.lr": "0.01",
                        "train.batch_size": "64"})
    t0 = time.perf_counter()
    res = run_experiment(cfg, tmp_path, data=desk_data)
    dt = time.perf_counter() - t0
    acc = res.report.accuracy
    verdict(5, "desk-scale custom CNN", res.status == EXIT_OK and acc >= 0.75 and dt < 900,
            f"test accuracy {acc:.3f} on 5000/1000 surrogate, 10 epochs, {dt:.0f}s")


@pytest.mark.slow
def test_6_desk_scale_deep_models(desk_data, tmp_path):
    accs = {}
    for kind in (TINY_RESNET, TINY_DENSENET):
        cfg = build_config({"pipeline": kind, "data.synthetic": "true", "data.train_per_class": str(DESK_TRAIN),
                            "data.test_per_class": str(DESK_TEST), "train.epochs": str(DEEP_EPOCHS)})
        assert cfg.train_config().lr_at(0) == 0.001 and cfg.train_config().lr_at(10) == 0.001 * 0.1
        res = run_experiment(cfg, tmp_path / kind, data=desk_data)
        accs[kind] = res.report.accuracy if res.status == EXIT_OK else float("nan")
    verdict(6, "desk-scale deep models", all(a >= 0.75 for a in accs.values()),
            ", ".join(f"{k} {v:.3f}" for k, v in accs.items()) + f" after {DEEP_EPOCHS} epochs")


def test_7_determinism(tmp_path):
    same = {}
    for kind in ("SVM", CUSTOM_CNN, TINY_RESNET, TINY_VGG, TINY_DENSENET):
        cfg = small_config(kind)
        run_experiment(cfg, tmp_path / kind / "a")
        run_experiment(cfg, tmp_path / kind / "b")
        same[kind] = read_all(tmp_path / kind / "a") == read_all(tmp_path / kind / "b")
    verdict(7, "determinism", all(same.values()),
            "byte-identical trainlog/report/checkpoint for " + ", ".join(k for k, v in same.items() if v))


def test_8_schedule_exactness(tmp_path):
    cfg = small_config(TINY_RESNET, **{"train.epochs": "20", "data.train_per_class": "2",
                                       "data.test_per_class": "1"})
    run_experiment(cfg, tmp_path)
    logged = [r.lr for r in TrainLog.from_csv((tmp_path / "trainlog.csv").read_text()).records]
    want = [0.001 * 0.1 ** (e // 10) for e in range(20)]
    worst = max(abs(a - b) for a, b in zip(logged, want)) if len(logged) == 20 else float("inf")
    verdict(8, "schedule exactness", logged == want, f"{len(logged)} logged epochs, max error {worst:.1e}")


def test_9_checkpoint_integrity(tmp_path):
    stable = True
    rng = np.random.default_rng(0)
    for kind in (CUSTOM_CNN, TINY_RESNET, TINY_VGG, TINY_DENSENET):
        m = build_model(ModelSpec(kind), 1)
        m.eval()
        xi = T.Tensor(rng.random((2, *m.spec.input_shape)))
        loaded = checkpoint_roundtrip(m, tmp_path / f"{kind}.ckpt")
        save_checkpoint(tmp_path / f"{kind}2.ckpt", model_checkpoint(loaded))
        stable &= (tmp_path / f"{kind}.ckpt").read_bytes() == (tmp_path / f"{kind}2.ckpt").read_bytes()
        stable &= np.array_equal(loaded(xi).data, m(xi).data)
    rejected = []
    bad = ("truncated", "bad_magic", "future_version", "trailing", "bad_length")
    for name in bad:
        try:
            load_checkpoint(FIXTURES / "checkpoints" / f"{name}.ckpt")
        except FormatError:
            rejected.append(name)
    verdict(9, "checkpoint integrity", stable and len(rejected) == len(bad),
            f"roundtrip bitwise={stable}, {len(rejected)}/{len(bad)} corrupted fixtures rejected")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
