"""Turns record lists into model-ready batches for each network family."""
from __future__ import annotations

import numpy as np

from .augment import AugmentConfig, eval_transform, train_transform
from .dataset import grayscale_batch, targets
from .errors import ContractError


class GrayscalePreprocess:
    """Custom-CNN input: 1×32×32 grayscale in [0, 1], no augmentation."""

    name = "grayscale"

    def __init__(self, records):
        self.x = grayscale_batch(records)
        self.y = targets(records)

    def __len__(self):
        return self.y.shape[0]

    def train_batch(self, idx, epoch: int) -> np.ndarray:
        return self.x[idx]

    def eval_all(self) -> np.ndarray:
        return self.x


class AugmentPreprocess:
    """Deep-model input: 3×24×24 normalised RGB. Training batches are
    augmented per sample from RngStream(seed, "augment", epoch, index)."""

    name = "augment"

    def __init__(self, records, cfg: AugmentConfig = AugmentConfig(), seed: int = 0):
        for r in records:
            if r.channels != 3:
                raise ContractError(f"{r.path}: deep models need RGB input, got {r.channels} channel(s)")
        self.cfg = cfg
        self.seed = seed
        self.pixels = [r.pixels for r in records]
        self.y = targets(records)
        self._eval = None

    def __len__(self):
        return self.y.shape[0]

    def train_batch(self, idx, epoch: int) -> np.ndarray:
        return np.stack([train_transform(self.pixels[i], self.cfg, self.seed, epoch, int(i)) for i in idx]) \
            if len(idx) else np.zeros((0, 3, self.cfg.crop_size, self.cfg.crop_size), np.float32)

    def eval_all(self) -> np.ndarray:
        if self._eval is None:
            if self.pixels:
                self._eval = np.stack([eval_transform(p, self.cfg) for p in self.pixels])
            else:
                self._eval = np.zeros((0, 3, self.cfg.crop_size, self.cfg.crop_size), np.float32)
        return self._eval


def make_preprocess(kind: str, records, aug: AugmentConfig | None = None, seed: int = 0):
    from .models import CUSTOM_CNN
    if kind == CUSTOM_CNN:
        return GrayscalePreprocess(records)
    return AugmentPreprocess(records, aug or AugmentConfig(), seed)
