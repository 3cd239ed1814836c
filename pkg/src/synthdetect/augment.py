"""Train- and eval-time transforms for the deep models.

Train: random resized crop to 24×24, random horizontal flip, per-channel
normalisation. Eval: centre crop to 24×24, same normalisation. Randomness
for sample i of epoch e under seed s comes from RngStream(s, "augment", e, i).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import ImageRecord, resize_bilinear_array
from .errors import ArgumentError, DimensionError, ShapeError
from .rng import RngStream

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class AugmentConfig:
    crop_size: int = 24
    scale: tuple = (0.08, 1.0)
    ratio: tuple = (3 / 4, 4 / 3)
    flip_prob: float = 0.5
    mean: tuple = IMAGENET_MEAN
    std: tuple = IMAGENET_STD

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ArgumentError(f"flip_prob must be in [0, 1], got {self.flip_prob}")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ArgumentError("mean and std need exactly 3 entries")
        if any(s <= 0 for s in self.std):
            raise ArgumentError("std entries must be positive")
        if self.crop_size < 1:
            raise ArgumentError("crop_size must be positive")


def _as_float(img) -> np.ndarray:
    if isinstance(img, ImageRecord):
        img = img.pixels
    a = np.asarray(img)
    if a.dtype == np.uint8:
        return a.astype(np.float64) / 255.0
    return a.astype(np.float64, copy=False)


def crop_rectangle(h: int, w: int, cfg: AugmentConfig, rng: RngStream) -> tuple:
    """(top, left, height, width) of a random crop; centre-crop fallback after
    10 rejected draws."""
    area = h * w
    log_ratio = (math.log(cfg.ratio[0]), math.log(cfg.ratio[1]))
    for _ in range(10):
        target = area * rng.uniform(cfg.scale[0], cfg.scale[1])
        aspect = math.exp(rng.uniform(*log_ratio))
        cw = int(round(math.sqrt(target * aspect)))
        ch = int(round(math.sqrt(target / aspect)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            return top, left, ch, cw
    in_ratio = w / h
    if in_ratio < min(cfg.ratio):
        cw, ch = w, int(round(w / min(cfg.ratio)))
    elif in_ratio > max(cfg.ratio):
        ch, cw = h, int(round(h * max(cfg.ratio)))
    else:
        cw, ch = w, h
    return (h - ch) // 2, (w - cw) // 2, ch, cw


def random_resized_crop(img, cfg: AugmentConfig, rng: RngStream) -> np.ndarray:
    """Crop a random sub-rectangle and bilinearly resize it to crop_size².
    Returns an H×W×C float array in [0, 1]."""
    a = _as_float(img)
    top, left, ch, cw = crop_rectangle(a.shape[0], a.shape[1], cfg, rng)
    patch = a[top:top + ch, left:left + cw]
    return resize_bilinear_array(patch, cfg.crop_size, cfg.crop_size)


def random_hflip(img, flip_prob: float, rng: RngStream) -> np.ndarray:
    a = _as_float(img)
    if rng.random() < flip_prob:
        return a[:, ::-1].copy()
    return a


def hflip(img) -> np.ndarray:
    return _as_float(img)[:, ::-1].copy()


def normalize_channels(img, cfg: AugmentConfig) -> np.ndarray:
    """H×W×3 in [0, 1] -> 3×H×W, (x - mean_c) / std_c."""
    a = _as_float(img)
    if a.ndim != 3 or a.shape[2] != 3:
        raise ShapeError(f"normalize_channels needs 3 channels, got shape {a.shape}")
    out = (a - np.asarray(cfg.mean)) / np.asarray(cfg.std)
    return out.transpose(2, 0, 1).astype(np.float32)


def denormalize_channels(x: np.ndarray, cfg: AugmentConfig) -> np.ndarray:
    return x.astype(np.float64).transpose(1, 2, 0) * np.asarray(cfg.std) + np.asarray(cfg.mean)


def center_crop(img, size: int) -> np.ndarray:
    a = _as_float(img)
    h, w = a.shape[:2]
    if h < size or w < size:
        raise DimensionError(f"cannot centre-crop {h}×{w} to {size}×{size}")
    top, left = (h - size) // 2, (w - size) // 2
    return a[top:top + size, left:left + size]


def eval_transform(img, cfg: AugmentConfig = AugmentConfig(), resize_to: int = 32) -> np.ndarray:
    """Resize shortest side to `resize_to`, centre-crop to crop_size, normalise."""
    a = _as_float(img)
    h, w = a.shape[:2]
    if min(h, w) < cfg.crop_size:
        raise DimensionError(f"input {h}×{w} smaller than crop size {cfg.crop_size}")
    if min(h, w) != resize_to:
        scale = resize_to / min(h, w)
        a = resize_bilinear_array(a, max(resize_to, round(h * scale)), max(resize_to, round(w * scale)))
    return normalize_channels(center_crop(a, cfg.crop_size), cfg)


def train_transform(img, cfg: AugmentConfig, seed: int, epoch: int, index: int) -> np.ndarray:
    rng = RngStream(seed, "augment", epoch, index)
    a = random_resized_crop(img, cfg, rng)
    a = random_hflip(a, cfg.flip_prob, rng)
    return normalize_channels(a, cfg)
