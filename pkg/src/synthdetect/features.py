"""HOG descriptors and standard-score scaling for the SVM pipeline."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dataset import ImageRecord, to_grayscale
from .errors import ArgumentError, DimensionError

BLOCK_EPS = 1e-6
STD_FLOOR = 1e-12


@dataclass(frozen=True)
class HogConfig:
    """HOG hyperparameters. Pixels are read on the [0, 255] scale.

    Orientation bins are centred at b·(range/n_bins), so bin 0 collects
    horizontal gradients (vertical edges).
    """
    cell_size: int = 8
    block_size: int = 2
    block_stride: int = 1
    n_bins: int = 9
    signed: bool = False

    def __post_init__(self):
        if self.n_bins < 2:
            raise ArgumentError("n_bins must be >= 2")
        if min(self.cell_size, self.block_size, self.block_stride) < 1:
            raise ArgumentError("cell_size, block_size and block_stride must be >= 1")

    def grid(self, h: int, w: int) -> tuple:
        """(cells_y, cells_x, blocks_y, blocks_x) for an h×w image."""
        span = self.cell_size * self.block_size
        if h < span or w < span:
            raise DimensionError(f"image {h}×{w} smaller than one {span}×{span} block")
        if h % self.cell_size or w % self.cell_size:
            raise DimensionError(f"image {h}×{w} does not divide into {self.cell_size}-pixel cells")
        cy, cx = h // self.cell_size, w // self.cell_size
        by = (cy - self.block_size) // self.block_stride + 1
        bx = (cx - self.block_size) // self.block_stride + 1
        return cy, cx, by, bx

    def dim(self, h: int = 32, w: int = 32) -> int:
        _, _, by, bx = self.grid(h, w)
        return by * bx * self.block_size ** 2 * self.n_bins


def _gradients(img: np.ndarray):
    """Centred [-1, 0, 1] differences with replicate padding; img is N×H×W."""
    p = np.pad(img, ((0, 0), (1, 1), (1, 1)), mode="edge")
    gx = p[:, 1:-1, 2:] - p[:, 1:-1, :-2]
    gy = p[:, 2:, 1:-1] - p[:, :-2, 1:-1]
    return gx, gy


def hog_batch(images: np.ndarray, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """HOG descriptors for an N×H×W stack of grayscale images -> N×dim."""
    imgs = np.asarray(images, dtype=np.float64)
    if imgs.ndim != 3:
        raise DimensionError(f"expected N×H×W grayscale stack, got {imgs.shape}")
    n, h, w = imgs.shape
    cy, cx, by, bx = cfg.grid(h, w)
    gx, gy = _gradients(imgs)
    mag = np.hypot(gx, gy)
    span = 360.0 if cfg.signed else 180.0
    ang = np.mod(np.degrees(np.arctan2(gy, gx)), span)
    pos = ang / (span / cfg.n_bins)
    b0 = np.floor(pos).astype(np.intp)
    frac = pos - b0
    b0 %= cfg.n_bins
    b1 = (b0 + 1) % cfg.n_bins

    votes = np.zeros((n, h, w, cfg.n_bins))
    ii = np.indices((n, h, w))
    # b0 != b1 for every pixel since n_bins >= 2, so plain assignment is safe
    votes[ii[0], ii[1], ii[2], b0] = mag * (1 - frac)
    votes[ii[0], ii[1], ii[2], b1] = mag * frac
    cs = cfg.cell_size
    cells = votes.reshape(n, cy, cs, cx, cs, cfg.n_bins).sum(axis=(2, 4))

    bs, st = cfg.block_size, cfg.block_stride
    blocks = np.empty((n, by, bx, bs * bs * cfg.n_bins))
    for y in range(by):
        for x in range(bx):
            blocks[:, y, x] = cells[:, y * st:y * st + bs, x * st:x * st + bs].reshape(n, -1)
    norm = np.sqrt((blocks ** 2).sum(axis=-1, keepdims=True) + BLOCK_EPS ** 2)
    return (blocks / norm).reshape(n, -1)


def hog_extract(img, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """HOG descriptor of one grayscale image (ImageRecord or H×W array)."""
    if isinstance(img, ImageRecord):
        if img.channels != 1:
            raise DimensionError(f"{img.path}: HOG needs a grayscale image")
        arr = img.pixels[:, :, 0]
    else:
        arr = np.asarray(img)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0]
        if arr.ndim != 2:
            raise DimensionError(f"HOG needs a single-channel image, got shape {arr.shape}")
    return hog_batch(arr[None], cfg)[0]


def hog_records(records, cfg: HogConfig = HogConfig(), chunk: int = 512) -> np.ndarray:
    """Grayscale + HOG for a list of records -> N×dim matrix."""
    out = []
    for start in range(0, len(records), chunk):
        part = records[start:start + chunk]
        out.append(hog_batch(np.stack([to_grayscale(r).pixels[:, :, 0] for r in part]), cfg))
    if not out:
        return np.zeros((0, cfg.dim()))
    return np.concatenate(out)


@dataclass(frozen=True)
class ScalerState:
    mean: np.ndarray
    std: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


def scaler_fit(rows) -> ScalerState:
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ArgumentError("scaler_fit needs a non-empty 2-D matrix")
    if X.shape[0] < 2:
        raise ArgumentError("scaler_fit needs at least 2 rows")
    mean = X.mean(axis=0)
    std = np.maximum(X.std(axis=0), STD_FLOOR)
    mean.setflags(write=False)
    std.setflags(write=False)
    return ScalerState(mean, std)


def scaler_apply(state: ScalerState, v) -> np.ndarray:
    """(v - mean) / std for a vector or a matrix of row vectors."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != state.dim:
        raise ArgumentError(f"feature dimension {v.shape[-1]} does not match scaler dimension {state.dim}")
    return (v - state.mean) / state.std


def write_feature_matrix(path, X: np.ndarray, cfg: HogConfig) -> None:
    X = np.asarray(X, dtype=np.float64)
    header = " ".join(f"{k}={v}" for k, v in asdict(cfg).items())
    with open(path, "w") as fh:
        fh.write(f"# dim={X.shape[1]} {header}\n")
        for row in X:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def read_feature_matrix(path) -> tuple:
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("# dim="):
            raise ArgumentError(f"{path}: missing feature header")
        meta = dict(tok.split("=", 1) for tok in header[2:].split())
        rows = [[float(x) for x in line.split(",")] for line in fh if line.strip()]
    X = np.asarray(rows, dtype=np.float64).reshape(-1, int(meta["dim"]))
    return X, meta
