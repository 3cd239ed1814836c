"""Parameter-holding layers built on the tensor ops.

A Module discovers its parameters, buffers and sub-modules from its instance
attributes in assignment order, which fixes the naming used by checkpoints.
"""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .rng import RngStream
from .tensor import Parameter, Tensor


class Module:
    training = True

    def forward(self, x: Tensor) -> Tensor:
        raise NotImplementedError

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def _members(self):
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, (Parameter, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}.{i}", v

    def named_parameters(self, prefix: str = ""):
        for name, value in self._members():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(full + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self, prefix: str = ""):
        for name, arr in self._own_buffers():
            yield f"{prefix}{name}", arr
        for name, value in self._members():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{name}.")

    def _own_buffers(self):
        return ()

    def modules(self):
        yield self
        for _, value in self._members():
            if isinstance(value, Module):
                yield from value.modules()

    def train(self):
        for m in self.modules():
            m.training = True
        return self

    def eval(self):
        for m in self.modules():
            m.training = False
        return self

    @property
    def mode(self) -> str:
        return T.TRAIN if self.training else T.EVAL

    def zero_grad(self):
        for p in self.parameters():
            p.zero_grad()

    def set_rng(self, rng: RngStream | None):
        for m in self.modules():
            if isinstance(m, Dropout):
                m.rng = rng


def he_uniform(shape, fan_in: int, rng: RngStream) -> np.ndarray:
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(T.default_dtype())


class Conv2d(Module):
    def __init__(self, in_ch: int, out_ch: int, k: int, rng: RngStream, stride: int = 1,
                 padding: int = 0, bias: bool = True):
        self.in_channels, self.out_channels = in_ch, out_ch
        self.kernel_size, self.stride, self.padding = k, stride, padding
        self.weight = Parameter(he_uniform((out_ch, in_ch, k, k), in_ch * k * k, rng.child("weight")))
        self.bias = Parameter(np.zeros(out_ch)) if bias else None

    def forward(self, x):
        return T.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class Linear(Module):
    """Affine map; weight is stored in_features × out_features."""

    def __init__(self, in_features: int, out_features: int, rng: RngStream):
        self.in_features, self.out_features = in_features, out_features
        self.weight = Parameter(he_uniform((in_features, out_features), in_features, rng.child("weight")))
        self.bias = Parameter(np.zeros(out_features))

    def forward(self, x):
        return T.affine(x, self.weight, self.bias)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.channels = channels
        self.eps = eps
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        self._state = T.BatchNormState(channels, momentum)

    def _own_buffers(self):
        return (("running_mean", self._state.running_mean), ("running_var", self._state.running_var))

    @property
    def state(self):
        return self._state

    def forward(self, x):
        return T.batchnorm2d(x, self.weight, self.bias, self._state, self.mode, self.eps)


class ReLU(Module):
    def forward(self, x):
        return T.relu(x)


class Sigmoid(Module):
    def forward(self, x):
        return T.sigmoid(x)


class MaxPool2d(Module):
    def __init__(self, k: int = 2, stride: int | None = None):
        self.k, self.stride = k, (k if stride is None else stride)

    def forward(self, x):
        return T.maxpool2d(x, self.k, self.stride)


class AvgPool2d(Module):
    def __init__(self, k: int = 2):
        self.k = k

    def forward(self, x):
        return T.avgpool2d(x, self.k)


class GlobalAvgPool(Module):
    def forward(self, x):
        return T.global_avgpool(x)


class Flatten(Module):
    def forward(self, x):
        return T.flatten(x)


class Dropout(Module):
    def __init__(self, p: float = 0.5):
        self.p = p
        self._rng = None

    @property
    def rng(self):
        return self._rng

    @rng.setter
    def rng(self, value):
        self._rng = value

    def forward(self, x):
        return T.dropout(x, self.p, self.mode, self._rng)


class Sequential(Module):
    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def __len__(self):
        return len(self.layers)

    def __getitem__(self, i):
        return self.layers[i]
