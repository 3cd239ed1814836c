"""Flat key=value experiment configuration.

Every key has a default, possibly depending on the pipeline. A loaded
config holds every key materialised, so the text written next to the run
artifacts is enough to repeat the run.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .augment import AugmentConfig
from .errors import ConfigError
from .features import HogConfig
from .models import CUSTOM_CNN, KINDS, ModelSpec
from .optim import StepLrSchedule, TrainConfig
from .svm import SvmConfig

SVM = "SVM"
PIPELINES = (SVM,) + KINDS
ALL = "all"
SYNTHETIC_DEFAULT = (2500, 500)
DATA_ENV = "SYNTHDETECT_DATA"


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {s!r}")


def _count(s: str):
    s = s.strip()
    return ALL if s.lower() == ALL else int(s)


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple:
    return tuple(int(x) for x in s.split(",") if x.strip())


def _gamma(s: str):
    s = s.strip()
    return "scale" if s == "scale" else float(s)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _deep(p):
    return p not in (SVM, CUSTOM_CNN)


# key -> (parser, default as a function of the pipeline)
SCHEMA = {
    "pipeline": (str, lambda p: CUSTOM_CNN),
    "seed": (int, lambda p: 0),
    "data.root": (str, lambda p: os.environ.get(DATA_ENV, "")),
    "data.synthetic": (_bool, lambda p: False),
    "data.train_per_class": (_count, lambda p: ALL),
    "data.test_per_class": (_count, lambda p: ALL),
    "out": (str, lambda p: "runs/" + p.lower()),
    "hog.cell_size": (int, lambda p: 8),
    "hog.block_size": (int, lambda p: 2),
    "hog.block_stride": (int, lambda p: 1),
    "hog.n_bins": (int, lambda p: 9),
    "hog.signed": (_bool, lambda p: False),
    "hog.pixel_scale": (str, lambda p: "0-255"),
    "svm.c": (float, lambda p: 1.0),
    "svm.gamma": (_gamma, lambda p: "scale"),
    "svm.tol": (float, lambda p: 1e-3),
    "svm.max_passes": (int, lambda p: 100),
    "svm.train_cap": (int, lambda p: 10000),
    "model.head_classes": (int, lambda p: 1 if p == CUSTOM_CNN else 2),
    "model.stages": (_ints, lambda p: ModelSpec(p).stages if p in KINDS else ()),
    "model.growth": (int, lambda p: 12),
    "model.dense_layers": (int, lambda p: 4),
    "model.dense_blocks": (int, lambda p: 2),
    "model.stem": (int, lambda p: 16),
    "model.hidden": (int, lambda p: 128),
    "model.dropout": (float, lambda p: 0.5),
    "train.epochs": (int, lambda p: 20 if _deep(p) else 25),
    "train.batch_size": (int, lambda p: 64),
    "train.lr": (float, lambda p: 0.001 if _deep(p) else 0.01),
    "train.eval_every": (int, lambda p: 1),
    "sched.kind": (str, lambda p: "step" if _deep(p) else "none"),
    "sched.step_size": (int, lambda p: 10),
    "sched.gamma": (float, lambda p: 0.1),
    "aug.crop": (int, lambda p: 24),
    "aug.scale": (_floats, lambda p: (0.08, 1.0)),
    "aug.ratio": (_floats, lambda p: (3 / 4, 4 / 3)),
    "aug.flip_prob": (float, lambda p: 0.5),
    "aug.mean": (_floats, lambda p: (0.485, 0.456, 0.406)),
    "aug.std": (_floats, lambda p: (0.229, 0.224, 0.225)),
    "log.wall_time": (_bool, lambda p: False),
}


def parse_text(text: str, origin: str = "<config>") -> dict:
    """key=value lines; '#' starts a comment line. Returns raw strings."""
    raw, problems = {}, []
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            problems.append(f"{origin}:{n}: expected key=value, got {s!r}")
            continue
        k, v = (x.strip() for x in s.split("=", 1))
        if k in raw:
            problems.append(f"{origin}:{n}: duplicate key {k}")
        raw[k] = v
    if problems:
        raise ConfigError(problems)
    return raw


@dataclass(frozen=True)
class ExperimentConfig:
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    @property
    def pipeline(self) -> str:
        return self.values["pipeline"]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    def to_text(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.values.items())

    def as_strings(self) -> dict:
        return {k: _fmt(v) for k, v in self.values.items()}

    def subset_sizes(self) -> tuple:
        tr, te = self["data.train_per_class"], self["data.test_per_class"]
        if self["data.synthetic"]:
            tr = SYNTHETIC_DEFAULT[0] if tr == ALL else tr
            te = SYNTHETIC_DEFAULT[1] if te == ALL else te
        return tr, te

    def hog_config(self) -> HogConfig:
        v = self.values
        return HogConfig(v["hog.cell_size"], v["hog.block_size"], v["hog.block_stride"], v["hog.n_bins"],
                         v["hog.signed"])

    def svm_config(self) -> SvmConfig:
        v = self.values
        return SvmConfig(v["svm.c"], v["svm.gamma"], v["svm.tol"], v["svm.max_passes"], self.seed)

    def model_spec(self) -> ModelSpec:
        v = self.values
        return ModelSpec(self.pipeline, v["model.head_classes"], v["model.stages"], v["model.growth"],
                         v["model.dense_layers"], v["model.dense_blocks"], v["model.stem"], v["model.hidden"],
                         v["model.dropout"])

    def train_config(self) -> TrainConfig:
        v = self.values
        sched = None
        if v["sched.kind"] == "step":
            sched = StepLrSchedule(v["train.lr"], v["sched.step_size"], v["sched.gamma"])
        return TrainConfig(v["train.epochs"], v["train.batch_size"], v["train.lr"], sched, self.seed,
                           v["train.eval_every"])

    def augment_config(self) -> AugmentConfig:
        v = self.values
        return AugmentConfig(v["aug.crop"], v["aug.scale"], v["aug.ratio"], v["aug.flip_prob"], v["aug.mean"],
                             v["aug.std"])


def build_config(raw: dict, check_paths: bool = True) -> ExperimentConfig:
    """Parse, default and validate raw key/value strings. Every problem found
    is reported at once through ConfigError."""
    problems = []
    unknown = sorted(set(raw) - set(SCHEMA))
    problems += [f"unknown key {k}" for k in unknown]
    pipeline = raw.get("pipeline", CUSTOM_CNN).strip().upper()
    if pipeline not in PIPELINES:
        problems.append(f"pipeline: must be one of {', '.join(PIPELINES)}, got {pipeline!r}")
        pipeline = CUSTOM_CNN
    values = {}
    for key, (parse, default) in SCHEMA.items():
        if key == "pipeline":
            values[key] = pipeline
            continue
        if key in raw:
            try:
                values[key] = parse(raw[key])
            except ValueError as exc:
                problems.append(f"{key}: {exc}")
                values[key] = default(pipeline)
        else:
            values[key] = default(pipeline)
    problems += _validate(values, check_paths)
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(values)


def _validate(v: dict, check_paths: bool) -> list:
    out = []

    def need(cond, key, msg):
        if not cond:
            out.append(f"{key}: {msg}, got {_fmt(v[key])}")

    for key in ("data.train_per_class", "data.test_per_class"):
        need(v[key] == ALL or v[key] >= 1, key, "must be >= 1 or 'all'")
    if v["data.synthetic"]:
        pass
    elif not v["data.root"]:
        out.append(f"data.root: no dataset root given (set data.root, ${DATA_ENV}, or data.synthetic=true)")
    elif check_paths and not Path(v["data.root"]).is_dir():
        out.append(f"data.root: directory {v['data.root']} does not exist")
    for key in ("hog.cell_size", "hog.block_size", "hog.block_stride"):
        need(v[key] >= 1, key, "must be >= 1")
    need(v["hog.n_bins"] >= 2, "hog.n_bins", "must be >= 2")
    need(v["hog.cell_size"] * v["hog.block_size"] <= 32, "hog.cell_size", "cell_size·block_size must fit in 32 px")
    need(v["hog.pixel_scale"] == "0-255", "hog.pixel_scale", "only 0-255 is supported")
    need(v["svm.c"] > 0, "svm.c", "must be > 0")
    need(v["svm.gamma"] == "scale" or v["svm.gamma"] > 0, "svm.gamma", "must be > 0 or 'scale'")
    need(v["svm.tol"] > 0, "svm.tol", "must be > 0")
    need(v["svm.max_passes"] >= 1, "svm.max_passes", "must be >= 1")
    need(v["svm.train_cap"] >= 2, "svm.train_cap", "must be >= 2")
    need(v["model.head_classes"] >= 1, "model.head_classes", "must be >= 1")
    if v["pipeline"] == CUSTOM_CNN:
        need(v["model.head_classes"] == 1, "model.head_classes", "the custom CNN has a single sigmoid output")
    elif v["pipeline"] != SVM:
        need(v["model.head_classes"] == 2, "model.head_classes", "deep models use a 2-way softmax head")
    need(all(s >= 1 for s in v["model.stages"]), "model.stages", "widths must be >= 1")
    for key in ("model.growth", "model.stem", "model.hidden", "model.dense_blocks"):
        need(v[key] >= 1, key, "must be >= 1")
    need(v["model.dense_layers"] >= 0, "model.dense_layers", "must be >= 0")
    need(0 <= v["model.dropout"] < 1, "model.dropout", "must be in [0, 1)")
    need(v["train.epochs"] >= 1, "train.epochs", "must be >= 1")
    need(v["train.batch_size"] >= 1, "train.batch_size", "must be >= 1")
    need(v["train.lr"] > 0, "train.lr", "must be > 0")
    need(v["train.eval_every"] >= 1, "train.eval_every", "must be >= 1")
    need(v["sched.kind"] in ("none", "step"), "sched.kind", "must be none or step")
    need(v["sched.step_size"] >= 1, "sched.step_size", "must be >= 1")
    need(0 < v["sched.gamma"] <= 1, "sched.gamma", "must be in (0, 1]")
    need(1 <= v["aug.crop"] <= 32, "aug.crop", "must be in [1, 32]")
    need(len(v["aug.scale"]) == 2 and 0 < v["aug.scale"][0] <= v["aug.scale"][1] <= 1, "aug.scale",
         "must be lo,hi with 0 < lo <= hi <= 1")
    need(len(v["aug.ratio"]) == 2 and 0 < v["aug.ratio"][0] <= v["aug.ratio"][1], "aug.ratio",
         "must be lo,hi with 0 < lo <= hi")
    need(0 <= v["aug.flip_prob"] <= 1, "aug.flip_prob", "must be in [0, 1]")
    need(len(v["aug.mean"]) == 3, "aug.mean", "needs 3 values")
    need(len(v["aug.std"]) == 3 and all(s > 0 for s in v["aug.std"]), "aug.std", "needs 3 positive values")
    if v["pipeline"] not in (SVM, CUSTOM_CNN) and not out:
        try:
            s = ModelSpec(v["pipeline"], 2, v["model.stages"])
            if v["pipeline"] == "TINY_VGG" and 24 % (2 ** len(s.stages)):
                out.append(f"model.stages: {len(s.stages)} VGG stages do not divide the 24-px input evenly")
        except Exception as exc:  # noqa: BLE001 - surfaced as a config problem
            out.append(f"model: {exc}")
    return out


def load_config(path=None, overrides: dict | None = None, check_paths: bool = True) -> ExperimentConfig:
    raw = parse_text(Path(path).read_text(), str(path)) if path else {}
    raw.update(overrides or {})
    return build_config(raw, check_paths)
