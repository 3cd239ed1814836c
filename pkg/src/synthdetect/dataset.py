"""Loading, labelling and subsetting of the CIFAKE image corpus.

Expected layout::

    root/train/FAKE/*.png   root/train/REAL/*.png
    root/test/FAKE/*.png    root/test/REAL/*.png
"""
from __future__ import annotations

import csv
import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ArgumentError, CapacityError, DecodeError, DimensionError, StructureError
from .rng import RngStream

IMAGE_SIZE = 32
SPLITS = ("train", "test")


class Label(str, enum.Enum):
    FAKE = "FAKE"
    REAL = "REAL"

    @property
    def target(self) -> int:
        """0/1 training target; FAKE is the positive (detected) class."""
        return 1 if self is Label.FAKE else 0

    @property
    def sign(self) -> int:
        return 1 if self is Label.FAKE else -1


LABELS = (Label.FAKE, Label.REAL)


@dataclass(frozen=True)
class ImageRecord:
    pixels: np.ndarray  # H×W×C uint8
    label: Label
    path: str

    def __post_init__(self):
        px = self.pixels
        if px.ndim != 3 or px.shape[2] not in (1, 3):
            raise DimensionError(f"{self.path}: expected H×W×C with C in (1, 3), got {px.shape}")
        if px.dtype != np.uint8:
            raise ArgumentError(f"{self.path}: pixels must be uint8, got {px.dtype}")
        px.setflags(write=False)

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]


@dataclass
class DatasetSplit:
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def records(self, split: str) -> list:
        if split not in SPLITS:
            raise ArgumentError(f"unknown split {split!r}")
        return self.train if split == "train" else self.test

    def counts(self) -> dict:
        out = {(s, lab): 0 for s in SPLITS for lab in LABELS}
        for s in SPLITS:
            for r in self.records(s):
                out[(s, r.label)] += 1
        return out

    def __len__(self):
        return len(self.train) + len(self.test)


def _decode_png(path: Path, label: Label) -> ImageRecord:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)[:, :, None]
            elif im.mode == "RGB":
                arr = np.asarray(im, dtype=np.uint8)
            elif im.mode in ("P", "RGBA", "LA", "PA"):
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            else:
                raise DecodeError(path, f"unsupported PNG mode {im.mode}")
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(str(path), f"cannot decode PNG ({exc})") from exc
    if arr.shape[:2] != (IMAGE_SIZE, IMAGE_SIZE):
        raise DimensionError(f"{path}: expected {IMAGE_SIZE}×{IMAGE_SIZE}, got {arr.shape[0]}×{arr.shape[1]}")
    return ImageRecord(np.ascontiguousarray(arr), label, str(path))


def ingest_cifake(root, workers: int = 1) -> DatasetSplit:
    """Decode every PNG under the four class directories.

    Records are ordered lexicographically by path within each split, so the
    result does not depend on `workers`.
    """
    root = Path(root)
    jobs = {s: [] for s in SPLITS}
    for s in SPLITS:
        for lab in LABELS:
            d = root / s / lab.value
            if not d.is_dir():
                raise StructureError(f"missing directory {d}")
            jobs[s].extend((p, lab) for p in d.iterdir() if p.suffix.lower() == ".png" and p.is_file())
    split = DatasetSplit()
    for s in SPLITS:
        items = sorted(jobs[s], key=lambda t: str(t[0]))
        if workers > 1 and len(items) > 1:
            with ThreadPoolExecutor(workers) as pool:
                recs = list(pool.map(lambda t: _decode_png(*t), items))
        else:
            recs = [_decode_png(p, lab) for p, lab in items]
        split.records(s).extend(recs)
    return split


def to_grayscale(img: ImageRecord) -> ImageRecord:
    """Luminosity grayscale (0.299 R + 0.587 G + 0.114 B), rounded half up."""
    if img.channels == 1:
        return img
    px = img.pixels.astype(np.float64)
    y = 0.299 * px[:, :, 0] + 0.587 * px[:, :, 1] + 0.114 * px[:, :, 2]
    y = np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)
    return ImageRecord(y[:, :, None], img.label, img.path)


def resize_bilinear_array(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling of an H×W×C array with half-pixel-centre mapping.

    Source coordinate of output pixel d is (d + 0.5)·in/out − 0.5, clamped to
    the image. Returns float64.
    """
    if out_h < 1 or out_w < 1:
        raise ArgumentError(f"target size must be positive, got {out_h}×{out_w}")
    a = np.asarray(arr, dtype=np.float64)
    in_h, in_w = a.shape[:2]

    def axis(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, src - i0

    y0, y1, wy = axis(in_h, out_h)
    x0, x1, wx = axis(in_w, out_w)
    wy = wy.reshape(-1, 1, *([1] * (a.ndim - 2)))
    wx = wx.reshape(1, -1, *([1] * (a.ndim - 2)))
    rows = a[y0] * (1 - wy) + a[y1] * wy
    return rows[:, x0] * (1 - wx) + rows[:, x1] * wx


def resize_bilinear(img: ImageRecord, out_h: int, out_w: int) -> ImageRecord:
    out = resize_bilinear_array(img.pixels, out_h, out_w)
    out = np.clip(np.floor(out + 0.5), 0, 255).astype(np.uint8)
    return ImageRecord(out, img.label, img.path)


def stratified_subset(split: DatasetSplit, n_per_class: int | None, seed: int,
                      test_per_class: int | None = None) -> DatasetSplit:
    """Sample `n_per_class` training records of each label without replacement
    (and `test_per_class` test records, when given; None keeps a split
    whole). Output keeps canonical path order."""

    def pick(records, n, name):
        by_label = {lab: [r for r in records if r.label is lab] for lab in LABELS}
        avail = {lab.value: len(v) for lab, v in by_label.items()}
        if n < 0 or any(n > a for a in avail.values()):
            raise CapacityError(f"{name}: requested {n} per class, available {avail}")
        chosen = []
        for lab in LABELS:
            rng = RngStream(seed, f"subset/{name}/{lab.value}")
            idx = rng.choice(len(by_label[lab]), size=n, replace=False)
            chosen.extend(by_label[lab][i] for i in idx)
        return sorted(chosen, key=lambda r: r.path)

    train = split.train if n_per_class is None else pick(split.train, n_per_class, "train")
    test = split.test if test_per_class is None else pick(split.test, test_per_class, "test")
    return DatasetSplit(list(train), list(test))


def write_manifest(split: DatasetSplit, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label", "split"])
        for s in SPLITS:
            for r in split.records(s):
                w.writerow([r.path, r.label.value, s])


def write_png_tree(split: DatasetSplit, root) -> None:
    """Write records into the four-directory layout under `root`, named by
    the basename of their path."""
    root = Path(root)
    for s in SPLITS:
        for lab in LABELS:
            (root / s / lab.value).mkdir(parents=True, exist_ok=True)
        for r in split.records(s):
            px = r.pixels[:, :, 0] if r.channels == 1 else r.pixels
            Image.fromarray(px).save(root / s / r.label.value / os.path.basename(r.path))


def grayscale_batch(records) -> np.ndarray:
    """Stack records as N×1×32×32 float32 grayscale in [0, 1]."""
    if not records:
        return np.zeros((0, 1, IMAGE_SIZE, IMAGE_SIZE), dtype=np.float32)
    px = np.stack([to_grayscale(r).pixels[:, :, 0] for r in records])
    return (px.astype(np.float32) / 255.0)[:, None]


def targets(records) -> np.ndarray:
    return np.array([r.label.target for r in records], dtype=np.int64)
