"""Model zoo: the small custom CNN and desk-scale residual, VGG-style and
densely connected networks, all ending in a replaceable affine head."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ArgumentError, ShapeError, StructureError
from .layers import (AvgPool2d, BatchNorm2d, Conv2d, Dropout, Flatten, GlobalAvgPool, Linear,
                     MaxPool2d, Module, ReLU, Sequential)
from .rng import RngStream
from .tensor import Tensor

CUSTOM_CNN = "CUSTOM_CNN"
TINY_RESNET = "TINY_RESNET"
TINY_VGG = "TINY_VGG"
TINY_DENSENET = "TINY_DENSENET"
KINDS = (CUSTOM_CNN, TINY_RESNET, TINY_VGG, TINY_DENSENET)


class ResidualBlock(Module):
    """x -> relu(x + bn(conv(relu(bn(conv(x)))))), with a 1×1 projection on
    the skip path whenever the channel count or stride changes."""

    def __init__(self, in_ch: int, out_ch: int, rng: RngStream, stride: int = 1):
        self.conv1 = Conv2d(in_ch, out_ch, 3, rng.child("conv1"), stride=stride, padding=1, bias=False)
        self.bn1 = BatchNorm2d(out_ch)
        self.conv2 = Conv2d(out_ch, out_ch, 3, rng.child("conv2"), padding=1, bias=False)
        self.bn2 = BatchNorm2d(out_ch)
        self.projection = None
        if in_ch != out_ch or stride != 1:
            self.projection = Sequential(
                Conv2d(in_ch, out_ch, 1, rng.child("proj"), stride=stride, bias=False),
                BatchNorm2d(out_ch),
            )

    def branch(self, x: Tensor) -> Tensor:
        out = T.relu(self.bn1(self.conv1(x)))
        return self.bn2(self.conv2(out))

    def forward(self, x):
        f = self.branch(x)
        skip = self.projection(x) if self.projection is not None else x
        if f.shape != skip.shape:
            raise ShapeError(f"residual branch {f.shape} cannot be added to skip path {skip.shape}")
        return T.relu(T.add(skip, f))


class DenseLayer(Module):
    """batchnorm -> relu -> 3×3 conv producing `growth` new channels."""

    def __init__(self, in_ch: int, growth: int, rng: RngStream):
        self.in_channels = in_ch
        self.bn = BatchNorm2d(in_ch)
        self.conv = Conv2d(in_ch, growth, 3, rng, padding=1, bias=False)

    def forward(self, x):
        if x.shape[1] != self.in_channels:
            raise ShapeError(f"dense layer expects {self.in_channels} channels, got {x.shape[1]}")
        return self.conv(T.relu(self.bn(x)))


class DenseBlock(Module):
    def __init__(self, in_ch: int, n_layers: int, growth: int, rng: RngStream):
        if n_layers < 0 or growth < 1:
            raise ArgumentError("dense block needs n_layers >= 0 and growth >= 1")
        self.in_channels = in_ch
        self.growth = growth
        self.layers = [DenseLayer(in_ch + i * growth, growth, rng.child(f"layer{i}")) for i in range(n_layers)]

    @property
    def out_channels(self) -> int:
        return self.in_channels + len(self.layers) * self.growth

    def forward(self, x):
        feats = [x]
        for layer in self.layers:
            inp = feats[0] if len(feats) == 1 else T.concat(feats, axis=1)
            feats.append(layer(inp))
        return feats[0] if len(feats) == 1 else T.concat(feats, axis=1)


class Transition(Module):
    def __init__(self, in_ch: int, out_ch: int, rng: RngStream):
        self.bn = BatchNorm2d(in_ch)
        self.conv = Conv2d(in_ch, out_ch, 1, rng, bias=False)
        self.pool = AvgPool2d(2)

    def forward(self, x):
        return self.pool(self.conv(T.relu(self.bn(x))))


class VggStack(Module):
    """Stages of two padded 3×3 conv+ReLU pairs followed by 2×2 max pooling."""

    def __init__(self, in_ch: int, stage_channels, rng: RngStream):
        self.stage_channels = tuple(stage_channels)
        convs = []
        c = in_ch
        for s, width in enumerate(self.stage_channels):
            convs.append(Conv2d(c, width, 3, rng.child(f"stage{s}a"), padding=1))
            convs.append(Conv2d(width, width, 3, rng.child(f"stage{s}b"), padding=1))
            c = width
        self.convs = convs
        self.pool = MaxPool2d(2, 2)

    def forward(self, x):
        for s in range(len(self.stage_channels)):
            h, w = x.shape[2:]
            if h % 2 or w % 2:
                raise ShapeError(f"vgg stage {s}: spatial size {h}×{w} is not divisible by 2")
            x = T.relu(self.convs[2 * s](x))
            x = T.relu(self.convs[2 * s + 1](x))
            x = self.pool(x)
        return x


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    head_classes: int = 2
    stages: tuple = ()
    growth: int = 12
    dense_layers: int = 4
    dense_blocks: int = 2
    stem: int = 16
    hidden: int = 128
    dropout: float = 0.5

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown model kind {self.kind!r}")
        if self.head_classes < 1:
            raise ArgumentError("head_classes must be >= 1")
        if not self.stages:
            default = {TINY_RESNET: (16, 32, 64), TINY_VGG: (32, 64)}
            object.__setattr__(self, "stages", default.get(self.kind, ()))
        object.__setattr__(self, "stages", tuple(int(s) for s in self.stages))

    @property
    def input_shape(self) -> tuple:
        return (1, 32, 32) if self.kind == CUSTOM_CNN else (3, 24, 24)

    @classmethod
    def custom_cnn(cls):
        return cls(CUSTOM_CNN, head_classes=1)


class Model(Module):
    """Feature extractor + terminal affine head (+ optional sigmoid)."""

    def __init__(self, spec: ModelSpec, features: Module, head: Linear, sigmoid_output: bool):
        self.spec = spec
        self.features = features
        self.head = head
        self.sigmoid_output = sigmoid_output

    def _members(self):
        # `spec` is metadata, not a module
        for name in ("features", "head"):
            value = getattr(self, name)
            if value is not None:
                yield name, value

    def forward(self, x):
        if tuple(x.shape[1:]) != self.spec.input_shape:
            raise ShapeError(f"{self.spec.kind} expects inputs of shape N×{self.spec.input_shape}, got {x.shape}")
        out = self.head(self.features(x))
        return T.sigmoid(out) if self.sigmoid_output else out

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def state_arrays(self) -> dict:
        """All parameters and buffers by checkpoint name."""
        out = {name: p.data for name, p in self.named_parameters()}
        out.update(dict(self.named_buffers()))
        return out

    def load_arrays(self, arrays: dict):
        own = {name: p.data for name, p in self.named_parameters()}
        own.update(dict(self.named_buffers()))
        missing = set(own) - set(arrays)
        extra = set(arrays) - set(own)
        if missing or extra:
            raise StructureError(f"parameter mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for name, target in own.items():
            src = np.asarray(arrays[name])
            if src.shape != target.shape:
                raise ShapeError(f"{name}: checkpoint shape {src.shape}, model shape {target.shape}")
            target[...] = src


def build_custom_cnn(seed: int = 0) -> Model:
    """conv(1->32, 3×3) -> relu -> maxpool 2 -> flatten(7200) -> affine(128) -> relu -> affine(1) -> sigmoid."""
    return build_model(ModelSpec.custom_cnn(), seed)


def build_model(spec: ModelSpec, seed: int = 0) -> Model:
    rng = RngStream(seed, f"init/{spec.kind}")
    if spec.kind == CUSTOM_CNN:
        features = Sequential(
            Conv2d(1, 32, 3, rng.child("conv")),
            ReLU(),
            MaxPool2d(2, 2),
            Flatten(),
            Linear(32 * 15 * 15, spec.hidden, rng.child("fc1")),
            ReLU(),
        )
        return Model(spec, features, Linear(spec.hidden, spec.head_classes, rng.child("head")),
                     sigmoid_output=spec.head_classes == 1)

    if spec.kind == TINY_RESNET:
        widths = spec.stages
        blocks = []
        c = widths[0]
        for i, w in enumerate(widths):
            blocks.append(ResidualBlock(c, w, rng.child(f"stage{i}"), stride=1 if i == 0 else 2))
            c = w
        features = Sequential(
            Conv2d(3, widths[0], 3, rng.child("stem"), padding=1, bias=False),
            BatchNorm2d(widths[0]),
            ReLU(),
            *blocks,
            GlobalAvgPool(),
        )
        n_feat = c
    elif spec.kind == TINY_DENSENET:
        n_blocks = spec.dense_blocks
        parts = [Conv2d(3, spec.stem, 3, rng.child("stem"), padding=1, bias=False),
                 BatchNorm2d(spec.stem), ReLU(), MaxPool2d(2, 2)]
        c = spec.stem
        for i in range(n_blocks):
            block = DenseBlock(c, spec.dense_layers, spec.growth, rng.child(f"dense{i}"))
            parts.append(block)
            c = block.out_channels
            if i < n_blocks - 1:
                parts.append(Transition(c, c // 2, rng.child(f"transition{i}")))
                c //= 2
        parts += [BatchNorm2d(c), ReLU(), GlobalAvgPool()]
        features = Sequential(*parts)
        n_feat = c
    else:
        side = spec.input_shape[1] // (2 ** len(spec.stages))
        features = Sequential(
            VggStack(3, spec.stages, rng.child("vgg")),
            Flatten(),
            Linear(spec.stages[-1] * side * side, spec.hidden, rng.child("fc1")),
            ReLU(),
            Dropout(spec.dropout),
        )
        n_feat = spec.hidden
    return Model(spec, features, Linear(n_feat, spec.head_classes, rng.child("head")), sigmoid_output=False)


def replace_head(model: Model, n_classes: int, seed: int = 0) -> Model:
    """Swap the terminal affine layer for a freshly initialised one with
    `n_classes` outputs; every upstream parameter is left untouched."""
    head = getattr(model, "head", None)
    if not isinstance(head, Linear):
        raise StructureError("model has no terminal affine layer to replace")
    if n_classes < 1:
        raise ArgumentError("n_classes must be >= 1")
    model.head = Linear(head.in_features, n_classes, RngStream(seed, "head"))
    model.spec = dataclasses.replace(model.spec, head_classes=n_classes)
    model.sigmoid_output = n_classes == 1 and model.spec.kind == CUSTOM_CNN
    return model


def predict_outputs(model: Model, x: np.ndarray, batch_size: int = 256) -> tuple:
    """(FAKE probability, predicted target) per input row, in EVAL mode.

    A sample is predicted FAKE when its probability is >= 0.5 (sigmoid
    output) or when its FAKE logit is >= its REAL logit (softmax head).
    """
    model.eval()
    dtype = model.head.weight.dtype
    scores, preds = [], []
    for start in range(0, x.shape[0], batch_size):
        y = model(Tensor(x[start:start + batch_size], dtype=dtype)).data
        if model.sigmoid_output:
            scores.append(y[:, 0].astype(np.float64))
            preds.append(y[:, 0] >= 0.5)
        else:
            scores.append(T.softmax(y.astype(np.float64))[:, 1])
            preds.append(y[:, 1] >= y[:, 0])
    if not scores:
        return np.zeros(0), np.zeros(0, dtype=np.int64)
    return np.concatenate(scores), np.concatenate(preds).astype(np.int64)


def predict_scores(model: Model, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Probability of the positive (FAKE) class for each input row, EVAL mode."""
    return predict_outputs(model, x, batch_size)[0]


_SPEC_FIELDS = ("kind", "head_classes", "stages", "growth", "dense_layers", "dense_blocks", "stem", "hidden",
                "dropout")


def spec_metadata(spec: ModelSpec) -> dict:
    """ModelSpec as model.* key=value strings."""
    out = {}
    for name in _SPEC_FIELDS:
        v = getattr(spec, name)
        out[f"model.{name}"] = ",".join(map(str, v)) if name == "stages" else str(v)
    return out


def spec_from_metadata(meta: dict) -> ModelSpec:
    try:
        kw = {}
        for name in _SPEC_FIELDS:
            raw = meta[f"model.{name}"]
            if name == "kind":
                kw[name] = raw
            elif name == "stages":
                kw[name] = tuple(int(s) for s in raw.split(",") if s)
            elif name == "dropout":
                kw[name] = float(raw)
            else:
                kw[name] = int(raw)
    except KeyError as exc:
        raise StructureError(f"checkpoint metadata lacks {exc.args[0]}") from None
    except ValueError as exc:
        raise StructureError(f"bad model metadata: {exc}") from None
    return ModelSpec(**kw)
