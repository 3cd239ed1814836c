"""End-to-end runs: load data, train one pipeline, evaluate, write artifacts.

Artifacts in the output directory:
    config.txt      every config key, defaults materialised
    trainlog.csv    one row per epoch (a single row for the SVM)
    report.txt      aligned per-class table
    report.kv       the same numbers at full precision, key=value
    confusion.csv   actual × predicted counts
    roc.csv, pr.csv curve points, FAKE as the positive class
    model.ckpt      parameters + metadata
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, model_checkpoint, model_from_checkpoint, save_checkpoint
from .config import ALL, SVM, ExperimentConfig, build_config
from .dataset import DatasetSplit, Label, ingest_cifake, stratified_subset
from .errors import ArgumentError, ContractError, UndefinedMetricError
from .evaluation import (ClassificationReport, ConfusionMatrix, classification_report, confusion, curve_csv,
                         pr_curve, render_key_values, render_table, roc_auc)
from .features import ScalerState, hog_records, scaler_apply, scaler_fit
from .models import CUSTOM_CNN, TINY_VGG, build_model, predict_outputs
from .optim import EpochRecord, TrainLog, train
from .preprocess import make_preprocess
from .svm import SvmModel, decision_scores, smo_train
from .synthetic import synthetic_split

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

DISPLAY_NAMES = {TINY_VGG: "TINY_VGG (VGG stand-in)"}


@dataclass
class RunResult:
    status: int
    out_dir: Path
    report: ClassificationReport | None = None
    confusion: ConfusionMatrix | None = None
    log: TrainLog | None = None
    files: list = field(default_factory=list)


def preprocess_name(pipeline: str) -> str:
    if pipeline == SVM:
        return "hog"
    return "grayscale" if pipeline == CUSTOM_CNN else "augment"


def load_data(cfg: ExperimentConfig) -> DatasetSplit:
    tr, te = cfg.subset_sizes()
    if cfg["data.synthetic"]:
        return synthetic_split(tr, te, cfg.seed)
    split = ingest_cifake(cfg["data.root"])
    if tr == ALL and te == ALL:
        return split
    return stratified_subset(split, None if tr == ALL else tr, cfg.seed, None if te == ALL else te)


def _cap(records, cap: int, seed: int) -> list:
    if len(records) <= cap:
        return records
    per_class = min(cap // 2, *(sum(r.label is lab for r in records) for lab in Label))
    return stratified_subset(DatasetSplit(records, []), per_class, seed).train


def _write(out: Path, name: str, text: str, files: list) -> None:
    (out / name).write_text(text, encoding="utf-8", newline="\n")
    files.append(name)


def _scores_report(scores: np.ndarray, preds: np.ndarray, truth: np.ndarray):
    """Confusion, report and curves; truth/preds are 0/1 targets (1 = FAKE)."""
    cm = confusion(preds, truth)
    try:
        roc = roc_auc(scores, truth)
    except UndefinedMetricError:
        roc = None
    try:
        pr = pr_curve(scores, truth)
    except UndefinedMetricError:
        pr = None
    rep = classification_report(cm, roc.auc if roc else None, pr.auc if pr else None)
    return cm, rep, roc, pr


def _write_reports(out: Path, name: str, header: str, cm, rep, roc, pr, files: list) -> None:
    _write(out, "report.txt", header + render_table({name: rep}), files)
    _write(out, "report.kv", render_key_values(rep, cm, name), files)
    _write(out, "confusion.csv", cm.to_csv(), files)
    _write(out, "roc.csv", curve_csv(roc.fpr, roc.tpr, roc.thresholds) if roc else "fpr,tpr,threshold\n", files)
    _write(out, "pr.csv", curve_csv(pr.recall, pr.precision, pr.thresholds, ("recall", "precision"))
           if pr else "recall,precision,threshold\n", files)


def _header(cfg: ExperimentConfig, data: DatasetSplit | None, n_test: int) -> str:
    lines = [f"# pipeline={cfg.pipeline} seed={cfg.seed}"]
    if data is not None:
        lines.append(f"# train={len(data.train)} test={n_test} synthetic={str(cfg['data.synthetic']).lower()}")
    else:
        lines.append(f"# test={n_test}")
    return "\n".join(lines) + "\n"


def _metadata(cfg: ExperimentConfig, status: str, epoch: int, rep: ClassificationReport | None) -> dict:
    meta = {"pipeline": cfg.pipeline, "preprocess": preprocess_name(cfg.pipeline), "status": status,
            "epoch": str(epoch)}
    if rep is not None:
        meta["metric.accuracy"] = repr(rep.accuracy)
        meta["metric.roc_auc"] = "undefined" if rep.roc_auc is None else repr(rep.roc_auc)
        meta["metric.pr_auc"] = "undefined" if rep.pr_auc is None else repr(rep.pr_auc)
    meta.update({f"config.{k}": v for k, v in cfg.as_strings().items()})
    return meta


# ---------------------------------------------------------------------------
# SVM

def _round32(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def _svm_arrays(model: SvmModel, scaler: ScalerState) -> dict:
    return {
        "svm.support_vectors": model.support_vectors, "svm.dual_coefs": model.dual_coefs,
        "svm.bias": np.array([model.bias]), "svm.gamma": np.array([model.gamma]),
        "scaler.mean": scaler.mean, "scaler.std": scaler.std,
    }


def _svm_from_arrays(arrays: dict, C: float = 1.0) -> tuple:
    """Rebuild (SvmModel, ScalerState) from float32 blocks."""
    try:
        model = SvmModel(_round32(arrays["svm.support_vectors"]), _round32(arrays["svm.dual_coefs"]),
                         float(_round32(arrays["svm.bias"])[0]), float(_round32(arrays["svm.gamma"])[0]), C)
        scaler = ScalerState(_round32(arrays["scaler.mean"]), _round32(arrays["scaler.std"]))
    except KeyError as exc:
        raise ContractError(f"checkpoint lacks SVM block {exc.args[0]}") from None
    return model, scaler


def _svm_scores(model: SvmModel, scaler: ScalerState, records, cfg: ExperimentConfig) -> np.ndarray:
    return decision_scores(model, scaler_apply(scaler, hog_records(records, cfg.hog_config())))


def _run_svm(cfg: ExperimentConfig, data: DatasetSplit):
    train_recs = _cap(data.train, cfg["svm.train_cap"], cfg.seed)
    X = hog_records(train_recs, cfg.hog_config())
    scaler = scaler_fit(X)
    y = np.array([r.label.sign for r in train_recs], dtype=np.float64)
    fitted = smo_train(scaler_apply(scaler, X), y, cfg.svm_config())
    # evaluate the float32 parameters the checkpoint will hold
    model, scaler32 = _svm_from_arrays(_svm_arrays(fitted, scaler), fitted.C)
    model.converged, model.n_iter, model.objective = fitted.converged, fitted.n_iter, fitted.objective
    train_acc = float(np.mean((decision_scores(model, scaler_apply(scaler32, X)) >= 0) == (y > 0)))
    return model, scaler32, train_acc, len(train_recs)


# ---------------------------------------------------------------------------

def run_experiment(cfg: ExperimentConfig, out_dir=None, data: DatasetSplit | None = None) -> RunResult:
    out = Path(out_dir or cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    files: list = []
    _write(out, "config.txt", cfg.to_text(), files)
    data = data if data is not None else load_data(cfg)
    if not data.train:
        raise ArgumentError("training split is empty")
    if not data.test:
        raise ArgumentError("test split is empty")
    truth = np.array([r.label.target for r in data.test], dtype=np.int64)
    name = DISPLAY_NAMES.get(cfg.pipeline, cfg.pipeline)

    if cfg.pipeline == SVM:
        model, scaler, train_acc, n_fit = _run_svm(cfg, data)
        scores = _svm_scores(model, scaler, data.test, cfg)
        preds = (scores >= 0).astype(np.int64)
        cm, rep, roc, pr = _scores_report(scores, preds, truth)
        tlog = TrainLog([EpochRecord(0, 0.0, model.objective, train_acc, rep.accuracy, 0.0)], steps=model.n_iter)
        _write(out, "trainlog.csv", tlog.to_csv(cfg["log.wall_time"]), files)
        meta = _metadata(cfg, "ok" if model.converged else "not_converged", 0, rep)
        meta.update({"svm.converged": str(model.converged).lower(), "svm.iterations": str(model.n_iter),
                     "svm.train_size": str(n_fit), "svm.C": repr(model.C)})
        save_checkpoint(out / "model.ckpt", Checkpoint(meta, _svm_arrays(model, scaler)))
        files.append("model.ckpt")
        _write_reports(out, name, _header(cfg, data, len(truth)), cm, rep, roc, pr, files)
        return RunResult(EXIT_OK, out, rep, cm, tlog, files)

    model = build_model(cfg.model_spec(), cfg.seed)
    aug = cfg.augment_config()
    pre = make_preprocess(cfg.pipeline, data.train, aug, cfg.seed)
    test_pre = make_preprocess(cfg.pipeline, data.test, aug, cfg.seed)
    model, tlog = train(model, data, cfg.train_config(), preprocess=pre, test_preprocess=test_pre)
    _write(out, "trainlog.csv", tlog.to_csv(cfg["log.wall_time"]), files)
    last_epoch = tlog.records[-1].epoch if tlog.records else -1
    if tlog.diverged:
        save_checkpoint(out / "model.ckpt", model_checkpoint(model, _metadata(cfg, "diverged", last_epoch, None)))
        files.append("model.ckpt")
        return RunResult(EXIT_DIVERGED, out, None, None, tlog, files)
    scores, preds = predict_outputs(model, test_pre.eval_all())
    cm, rep, roc, pr = _scores_report(scores, preds, truth)
    save_checkpoint(out / "model.ckpt", model_checkpoint(model, _metadata(cfg, "ok", last_epoch, rep)))
    files.append("model.ckpt")
    _write_reports(out, name, _header(cfg, data, len(truth)), cm, rep, roc, pr, files)
    return RunResult(EXIT_OK, out, rep, cm, tlog, files)


def config_from_checkpoint(ckpt: Checkpoint) -> ExperimentConfig:
    raw = {k[len("config."):]: v for k, v in ckpt.metadata.items() if k.startswith("config.")}
    if "pipeline" not in raw:
        raise ContractError("checkpoint carries no config snapshot")
    return build_config(raw, check_paths=False)


def evaluate_command(checkpoint_path, out_dir, root=None, data: DatasetSplit | None = None) -> RunResult:
    """Score a saved model on a test split without training.

    The test split comes from `data`, else the whole test directory under
    `root`, else the run's own config snapshot (same subset, same seed).
    """
    ckpt = load_checkpoint(checkpoint_path)
    cfg = config_from_checkpoint(ckpt)
    pipeline = ckpt.metadata.get("pipeline", cfg.pipeline)
    if pipeline != cfg.pipeline or ckpt.metadata.get("preprocess") != preprocess_name(pipeline):
        raise ContractError(f"checkpoint preprocessing {ckpt.metadata.get('preprocess')!r} does not match "
                            f"pipeline {pipeline} ({preprocess_name(pipeline)!r})")
    if data is not None:
        test = data.test
    elif root is not None:
        test = ingest_cifake(root).test
    else:
        test = load_data(cfg).test
    if not test:
        raise ArgumentError("test split is empty")
    truth = np.array([r.label.target for r in test], dtype=np.int64)

    if pipeline == SVM:
        model, scaler = _svm_from_arrays(ckpt.arrays)
        scores = _svm_scores(model, scaler, test, cfg)
        preds = (scores >= 0).astype(np.int64)
    else:
        model = model_from_checkpoint(ckpt)
        if model.spec.kind != pipeline:
            raise ContractError(f"checkpoint holds a {model.spec.kind} but was saved by pipeline {pipeline}")
        pre = make_preprocess(pipeline, test, cfg.augment_config(), cfg.seed)
        scores, preds = predict_outputs(model, pre.eval_all())

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list = []
    cm, rep, roc, pr = _scores_report(scores, preds, truth)
    _write_reports(out, DISPLAY_NAMES.get(pipeline, pipeline), _header(cfg, None, len(truth)), cm, rep, roc, pr,
                   files)
    return RunResult(EXIT_OK, out, rep, cm, None, files)


def _read_kv(path: Path) -> dict:
    out = {}
    for line in path.read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k] = v
    return out


def report_from_paths(paths) -> str:
    """Re-render a table from saved confusion matrices. Each path is a run
    directory (confusion.csv, plus AUCs from report.kv) or a confusion CSV."""
    rows = {}
    for p in map(Path, paths):
        if p.is_dir():
            cm = ConfusionMatrix.from_csv((p / "confusion.csv").read_text())
            kv = _read_kv(p / "report.kv") if (p / "report.kv").exists() else {}
            name = kv.get("model", p.name)

            def auc(key):
                v = kv.get(key)
                return None if v in (None, "undefined") else float(v)

            rows[name] = classification_report(cm, auc("roc_auc"), auc("pr_auc"))
        else:
            rows[p.stem] = classification_report(ConfusionMatrix.from_csv(p.read_text()))
    if not rows:
        raise ArgumentError("no confusion matrices given")
    return render_table(rows)
