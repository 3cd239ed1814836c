"""Adam, step-decay learning rates and the epoch training loop."""
from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .dataset import DatasetSplit
from .errors import ArgumentError, NumericalError, OptimizerStateError
from .rng import RngStream
from .tensor import Tensor

log = logging.getLogger(__name__)

BCE = "bce"
CROSS_ENTROPY = "cross_entropy"


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params):
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params])


def adam_step(params, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place on every parameter."""
    if len(params) != len(state.m):
        raise OptimizerStateError(f"{len(params)} parameters but optimizer state for {len(state.m)}")
    for p in params:
        if p.grad is None:
            raise OptimizerStateError("parameter has no gradient; run backward() first")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.t
    c2 = 1 - b2 ** state.t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.data.dtype)


@dataclass(frozen=True)
class StepLrSchedule:
    base_lr: float
    step_size: int = 10
    gamma: float = 0.1

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ArgumentError("base_lr must be > 0")
        if not 0 < self.gamma <= 1:
            raise ArgumentError("gamma must be in (0, 1]")
        if self.step_size < 1:
            raise ArgumentError("step_size must be >= 1")


def step_lr(schedule: StepLrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ArgumentError("epoch must be >= 0")
    return schedule.base_lr * schedule.gamma ** (epoch // schedule.step_size)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 25
    batch_size: int = 64
    lr: float = 0.01
    schedule: StepLrSchedule | None = None
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ArgumentError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ArgumentError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ArgumentError("lr must be > 0")
        if self.eval_every < 1:
            raise ArgumentError("eval_every must be >= 1")

    def lr_at(self, epoch: int) -> float:
        return self.lr if self.schedule is None else step_lr(self.schedule, epoch)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    test_acc: float | None
    seconds: float


@dataclass
class TrainLog:
    records: list = field(default_factory=list)
    status: str = "ok"
    steps: int = 0

    @property
    def diverged(self) -> bool:
        return self.status == "diverged"

    def to_csv(self, wall_time: bool = False) -> str:
        """epoch,lr,train_loss,train_acc,test_acc,seconds. Wall time is
        left blank unless asked for, so logs of identical runs are
        byte-identical."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "lr", "train_loss", "train_acc", "test_acc", "seconds"])
        for r in self.records:
            w.writerow([r.epoch, repr(r.lr), repr(r.train_loss), repr(r.train_acc),
                        "" if r.test_acc is None else repr(r.test_acc),
                        f"{r.seconds:.3f}" if wall_time else ""])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainLog":
        rows = list(csv.DictReader(io.StringIO(text)))
        recs = [EpochRecord(int(r["epoch"]), float(r["lr"]), float(r["train_loss"]), float(r["train_acc"]),
                            float(r["test_acc"]) if r["test_acc"] else None,
                            float(r["seconds"]) if r["seconds"] else 0.0) for r in rows]
        return cls(recs)


def _loss(kind: str, out: Tensor, y: np.ndarray) -> Tensor:
    if kind == BCE:
        return T.binary_cross_entropy(out, y)
    if kind == CROSS_ENTROPY:
        return T.cross_entropy(out, y)
    raise ArgumentError(f"unknown loss {kind!r}")


def _predicted(out: np.ndarray, kind: str) -> np.ndarray:
    if kind == BCE:
        return (out[:, 0] >= 0.5).astype(np.int64)
    return (out[:, 1] >= out[:, 0]).astype(np.int64)


def evaluate_accuracy(model, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> float:
    from .models import predict_outputs
    _, preds = predict_outputs(model, x, batch_size)
    return float((preds == y).sum()) / max(1, x.shape[0])


def loss_for(model) -> str:
    return BCE if model.sigmoid_output else CROSS_ENTROPY


def train(model, data: DatasetSplit, cfg: TrainConfig, loss: str | None = None, preprocess=None,
          test_preprocess=None, on_epoch=None):
    """Train `model` in place for cfg.epochs; returns (model, TrainLog).

    Each epoch visits a permutation drawn from RngStream(seed, "shuffle",
    epoch); the final short batch is kept. A non-finite loss stops training
    with log.status == "diverged" and the records completed so far.
    """
    from .preprocess import make_preprocess

    if not data.train:
        raise ArgumentError("training split is empty")
    loss = loss or loss_for(model)
    pre = preprocess or make_preprocess(model.spec.kind, data.train, seed=cfg.seed)
    test_pre = test_preprocess
    if test_pre is None and data.test:
        test_pre = make_preprocess(model.spec.kind, data.test, seed=cfg.seed)
    y_all = pre.y
    n = len(pre)
    params = model.parameters()
    state = AdamState.for_params(params)
    dtype = model.head.weight.dtype
    tlog = TrainLog()

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        lr = cfg.lr_at(epoch)
        perm = RngStream(cfg.seed, "shuffle", epoch).permutation(n)
        total_loss, correct = 0.0, 0
        model.train()
        test_acc = None
        try:
            # non-finite values are caught explicitly below, so numpy's overflow warnings are noise here
            with np.errstate(over="ignore", invalid="ignore"):
                for b, start in enumerate(range(0, n, cfg.batch_size)):
                    idx = perm[start:start + cfg.batch_size]
                    xb = pre.train_batch(idx, epoch)
                    yb = y_all[idx]
                    model.set_rng(RngStream(cfg.seed, "dropout", epoch, b))
                    out = model(Tensor(xb, dtype=dtype))
                    L = _loss(loss, out, yb)
                    if not math.isfinite(L.item()):
                        raise NumericalError("non-finite loss")
                    model.zero_grad()
                    T.backward(L)
                    adam_step(params, state, lr)
                    tlog.steps += 1
                    total_loss += L.item() * len(idx)
                    correct += int((_predicted(out.data, loss) == yb).sum())
                last = epoch == cfg.epochs - 1
                if test_pre is not None and len(test_pre) and ((epoch + 1) % cfg.eval_every == 0 or last):
                    test_acc = evaluate_accuracy(model, test_pre.eval_all(), test_pre.y)
        except NumericalError as exc:
            log.warning("training diverged in epoch %d: %s", epoch, exc)
            tlog.status = "diverged"
            model.eval()
            return model, tlog
        rec = EpochRecord(epoch, lr, total_loss / n, correct / n, test_acc, time.perf_counter() - t0)
        tlog.records.append(rec)
        log.info("epoch %d lr=%g loss=%.4f train_acc=%.4f test_acc=%s (%.1fs)", epoch, lr, rec.train_loss,
                 rec.train_acc, "-" if test_acc is None else f"{test_acc:.4f}", rec.seconds)
        if on_epoch is not None:
            on_epoch(rec)
    model.eval()
    return model, tlog
