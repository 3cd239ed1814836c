"""Confusion matrices, per-class reports, ROC and precision-recall curves.

FAKE is the positive class for every score-based metric. Reports are kept
at full precision and rendered at two decimals.
"""
from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field

import numpy as np

from .dataset import LABELS, Label
from .errors import ArgumentError, UndefinedMetricError


def _as_labels(values) -> list:
    out = []
    for v in values:
        if isinstance(v, Label):
            out.append(v)
        elif isinstance(v, str):
            out.append(Label(v.upper()))
        else:
            # numeric: +1 / 1 -> FAKE, -1 / 0 -> REAL
            out.append(Label.FAKE if v > 0 else Label.REAL)
    return out


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[actual][predicted] with index 0 = FAKE, 1 = REAL."""
    counts: tuple

    @classmethod
    def from_counts(cls, ff, fr, rf, rr):
        return cls(((int(ff), int(fr)), (int(rf), int(rr))))

    def __post_init__(self):
        arr = np.asarray(self.counts)
        if arr.shape != (2, 2) or (arr < 0).any():
            raise ArgumentError(f"confusion counts must be a non-negative 2×2 table, got {self.counts}")

    def cell(self, actual: Label, predicted: Label) -> int:
        return self.counts[LABELS.index(actual)][LABELS.index(predicted)]

    @property
    def total(self) -> int:
        return sum(map(sum, self.counts))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=np.int64)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["actual", "pred_FAKE", "pred_REAL"])
        for lab, row in zip(LABELS, self.counts):
            w.writerow([lab.value, *row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str):
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        if not rows or rows[0][:3] != ["actual", "pred_FAKE", "pred_REAL"]:
            raise ArgumentError("confusion CSV needs the header actual,pred_FAKE,pred_REAL")
        body = {r[0].strip().upper(): (int(r[1]), int(r[2])) for r in rows[1:]}
        if set(body) != {"FAKE", "REAL"}:
            raise ArgumentError("confusion CSV needs one FAKE row and one REAL row")
        return cls((body["FAKE"], body["REAL"]))


def confusion(preds, truth) -> ConfusionMatrix:
    preds, truth = _as_labels(preds), _as_labels(truth)
    if len(preds) != len(truth):
        raise ArgumentError(f"{len(preds)} predictions for {len(truth)} labels")
    if not preds:
        raise ArgumentError("confusion needs at least one sample")
    c = np.zeros((2, 2), dtype=np.int64)
    for p, t in zip(preds, truth):
        c[LABELS.index(t), LABELS.index(p)] += 1
    return ConfusionMatrix(tuple(tuple(int(v) for v in row) for row in c))


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    undefined: tuple = ()  # names of metrics that hit 0/0


@dataclass(frozen=True)
class ClassificationReport:
    per_class: dict
    accuracy: float
    total: int
    roc_auc: float | None = None
    pr_auc: float | None = None
    warnings: tuple = field(default=())

    def __getitem__(self, label) -> ClassMetrics:
        return self.per_class[Label(label)]


def _ratio(num, den):
    return (num / den, False) if den else (0.0, True)


def classification_report(cm: ConfusionMatrix, roc_auc: float | None = None,
                          pr_auc: float | None = None) -> ClassificationReport:
    total = cm.total
    if total == 0:
        raise ArgumentError("classification report of an empty confusion matrix")
    a = cm.as_array()
    per_class, notes = {}, []
    for k, lab in enumerate(LABELS):
        tp = a[k, k]
        predicted = a[:, k].sum()
        actual = a[k, :].sum()
        p, p_undef = _ratio(tp, predicted)
        r, r_undef = _ratio(tp, actual)
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        undefined = tuple(n for n, u in (("precision", p_undef), ("recall", r_undef)) if u)
        for name in undefined:
            notes.append(f"{name}({lab.value}) is 0/0, reported as 0")
        per_class[lab] = ClassMetrics(float(p), float(r), float(f1), int(actual), undefined)
    for note in notes:
        warnings.warn(note, RuntimeWarning)
    acc = float(np.trace(a) / total)
    return ClassificationReport(per_class, acc, int(total), roc_auc, pr_auc, tuple(notes))


# ---------------------------------------------------------------------------
# score-based curves

@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray  # thresholds[k] produced point k+1; point 0 is (0, 0)
    auc: float


def _binary_truth(truth, positive: Label) -> np.ndarray:
    labs = _as_labels(truth)
    return np.array([lab is positive for lab in labs], dtype=bool)


def _sweep(scores, truth):
    """Cumulative TP/FP counts at each distinct score, highest first."""
    s = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-s, kind="mergesort")
    s, t = s[order], truth[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(t)[last]
    fp = np.cumsum(~t)[last]
    return s[last], tp, fp


def roc_auc(scores, truth, positive: Label = Label.FAKE) -> RocCurve:
    t = _binary_truth(truth, positive)
    if len(t) != len(scores):
        raise ArgumentError(f"{len(scores)} scores for {len(t)} labels")
    n_pos, n_neg = int(t.sum()), int((~t).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("ROC-AUC needs both classes in the ground truth")
    thr, tp, fp = _sweep(scores, t)
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(fpr, tpr, thr, auc)


@dataclass(frozen=True)
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    thresholds: np.ndarray
    auc: float


def pr_curve(scores, truth, positive: Label = Label.FAKE) -> PrCurve:
    """Precision/recall at every distinct threshold; area is the step-wise sum
    of precision times recall increments (average precision)."""
    t = _binary_truth(truth, positive)
    if len(t) != len(scores):
        raise ArgumentError(f"{len(scores)} scores for {len(t)} labels")
    n_pos = int(t.sum())
    if n_pos == 0:
        raise UndefinedMetricError("PR-AUC needs at least one positive sample")
    thr, tp, fp = _sweep(scores, t)
    recall = tp / n_pos
    precision = tp / (tp + fp)
    auc = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    return PrCurve(recall, precision, thr, auc)


def pr_auc(scores, truth, positive: Label = Label.FAKE) -> float:
    return pr_curve(scores, truth, positive).auc


# ---------------------------------------------------------------------------
# rendering

TABLE_COLUMNS = ("Precision", "Recall", "F1-Score")


def render_table(rows: dict) -> str:
    """Aligned text table with the column layout of a per-model classification
    report: Fake P/R/F1 | Real P/R/F1 | Accuracy, ROC-AUC, PR-AUC.

    `rows` maps a model name to its ClassificationReport.
    """
    def fmt(x):
        return "  -- " if x is None else f"{x:.2f}"

    name_w = max([5] + [len(n) for n in rows])
    head1 = f"{'':<{name_w}} | {'Fake':^20} | {'Real':^20} | {'Overall':^20}"
    head2 = f"{'Model':<{name_w}} | " + " | ".join(
        [" ".join(f"{c[:6]:>6}" for c in ("Prec", "Recall", "F1"))] * 2
        + [" ".join(f"{c:>6}" for c in ("Acc", "ROC", "PR"))]
    )
    lines = [head1.rstrip(), head2, "-" * len(head2)]
    for name, rep in rows.items():
        f, r = rep[Label.FAKE], rep[Label.REAL]
        cells = [
            " ".join(f"{fmt(v):>6}" for v in (f.precision, f.recall, f.f1)),
            " ".join(f"{fmt(v):>6}" for v in (r.precision, r.recall, r.f1)),
            " ".join(f"{fmt(v):>6}" for v in (rep.accuracy, rep.roc_auc, rep.pr_auc)),
        ]
        lines.append(f"{name:<{name_w}} | " + " | ".join(cells))
    lines.append("positive class: FAKE")
    return "\n".join(lines) + "\n"


def render_key_values(rep: ClassificationReport, cm: ConfusionMatrix | None = None, name: str = "") -> str:
    kv = []
    if name:
        kv.append(("model", name))
    kv.append(("positive_class", "FAKE"))
    kv.append(("total", str(rep.total)))
    kv.append(("accuracy", repr(rep.accuracy)))
    for lab in LABELS:
        m = rep[lab]
        low = lab.value.lower()
        kv += [(f"{low}.precision", repr(m.precision)), (f"{low}.recall", repr(m.recall)),
               (f"{low}.f1", repr(m.f1)), (f"{low}.support", str(m.support))]
    kv.append(("roc_auc", "undefined" if rep.roc_auc is None else repr(rep.roc_auc)))
    kv.append(("pr_auc", "undefined" if rep.pr_auc is None else repr(rep.pr_auc)))
    if cm is not None:
        for a in LABELS:
            for p in LABELS:
                kv.append((f"confusion.{a.value}.{p.value}", str(cm.cell(a, p))))
    for i, w in enumerate(rep.warnings):
        kv.append((f"warning.{i}", w))
    return "".join(f"{k}={v}\n" for k, v in kv)


def curve_csv(x, y, thresholds, names=("fpr", "tpr")) -> str:
    """Two-column point file (plus the threshold that produced each point)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([names[0], names[1], "threshold"])
    thr = list(thresholds)
    offset = len(x) - len(thr)
    for k, (a, b) in enumerate(zip(x, y)):
        w.writerow([repr(float(a)), repr(float(b)), "" if k < offset else repr(float(thr[k - offset]))])
    return buf.getvalue()
