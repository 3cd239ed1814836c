"""Stand-in corpus of two Gaussian-textured image classes.

Each image is a random Gaussian field with a power-law spectrum
|F(f)| ~ f^(-beta/2). REAL images draw a steeper slope (smoother texture)
than FAKE images. The slope ranges only touch, but a 32x32 sample estimates
its slope noisily, so the task is still not separable. Contrast, brightness
and tint are randomised per image and carry no label information. Power-law fields look alike at every zoom level, so
the class cue survives random-resized cropping as well as grayscale
conversion.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import IMAGE_SIZE, LABELS, DatasetSplit, ImageRecord, Label
from .rng import RngStream


@dataclass(frozen=True)
class SyntheticConfig:
    real_beta: tuple = (2.4, 3.4)
    fake_beta: tuple = (1.4, 2.4)
    contrast: tuple = (28.0, 56.0)
    brightness: tuple = (90.0, 165.0)
    tint: float = 18.0
    chroma: float = 0.25  # weight of the per-channel field relative to the shared one


def _radial_freq(n: int) -> np.ndarray:
    f = np.fft.fftfreq(n)
    r = np.hypot(f[:, None], f[None, :])
    r[0, 0] = np.inf  # no DC energy
    return r


_FREQ = _radial_freq(IMAGE_SIZE)


def _field(rng: RngStream, beta: float, n_fields: int) -> np.ndarray:
    white = rng.normal(size=(n_fields, IMAGE_SIZE, IMAGE_SIZE))
    spec = np.fft.fft2(white) * _FREQ ** (-beta / 2)
    f = np.real(np.fft.ifft2(spec))
    f -= f.mean(axis=(1, 2), keepdims=True)
    f /= f.std(axis=(1, 2), keepdims=True)
    return f


def synthetic_image(label: Label, rng: RngStream, cfg: SyntheticConfig = SyntheticConfig()) -> np.ndarray:
    lo, hi = cfg.fake_beta if label is Label.FAKE else cfg.real_beta
    beta = rng.uniform(lo, hi)
    fields = _field(rng, beta, 4)
    shared, own = fields[0], fields[1:]
    img = (shared[None] + cfg.chroma * own) / np.sqrt(1 + cfg.chroma ** 2)
    contrast = rng.uniform(*cfg.contrast)
    base = rng.uniform(*cfg.brightness) + rng.uniform(-cfg.tint, cfg.tint, size=3)
    px = base[:, None, None] + contrast * img
    return np.clip(np.floor(px + 0.5), 0, 255).astype(np.uint8).transpose(1, 2, 0)


def synthetic_split(n_train_per_class: int, n_test_per_class: int, seed: int = 0,
                    cfg: SyntheticConfig = SyntheticConfig()) -> DatasetSplit:
    """Balanced train/test split; record i of (split, label) depends only on
    (seed, split, label, i)."""
    out = DatasetSplit()
    for split, n in (("train", n_train_per_class), ("test", n_test_per_class)):
        recs = []
        for lab in LABELS:
            for i in range(n):
                rng = RngStream(seed, f"synthetic/{split}/{lab.value}", 0, i)
                recs.append(ImageRecord(synthetic_image(lab, rng, cfg), lab, f"{split}/{lab.value}/{i:05d}.png"))
        out.records(split).extend(sorted(recs, key=lambda r: r.path))
    return out
