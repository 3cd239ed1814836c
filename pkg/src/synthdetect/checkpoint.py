"""Binary checkpoint format.

Layout (all integers little-endian):

    b"SYND1"                          magic
    uint32 version                    currently 1
    uint32 n, n bytes                 UTF-8 metadata, one key=value per line
    uint32 block count
    per block:
        uint16 n, n bytes             UTF-8 block name
        uint8 ndim, ndim × uint32     shape
        uint64 nbytes                 = 4 · prod(shape)
        nbytes                        float32 values, row-major

The file must end exactly after the last block. Encoding is canonical, so
save -> load -> save reproduces the same bytes.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError

MAGIC = b"SYND1"
VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    metadata: dict = field(default_factory=dict)  # str -> str, order preserved
    arrays: dict = field(default_factory=dict)  # str -> float32 ndarray, order preserved


def _meta_text(meta: dict) -> bytes:
    lines = []
    for k, v in meta.items():
        k, v = str(k), str(v)
        if not k or "=" in k or "\n" in k or "\n" in v:
            raise ArgumentError(f"metadata entry {k!r} cannot be stored as a key=value line")
        lines.append(f"{k}={v}\n")
    return "".join(lines).encode("utf-8")


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    parts = [MAGIC, struct.pack("<I", VERSION)]
    meta = _meta_text(ckpt.metadata)
    parts += [struct.pack("<I", len(meta)), meta, struct.pack("<I", len(ckpt.arrays))]
    for name, arr in ckpt.arrays.items():
        raw_name = name.encode("utf-8")
        if len(raw_name) > 0xFFFF:
            raise ArgumentError(f"block name too long: {name[:40]}...")
        a = np.ascontiguousarray(np.asarray(arr), dtype=_F32)
        if a.ndim > 255:
            raise ArgumentError(f"{name}: too many dimensions")
        data = a.tobytes()
        parts += [struct.pack("<H", len(raw_name)), raw_name, struct.pack("<B", a.ndim),
                  struct.pack(f"<{a.ndim}I", *a.shape), struct.pack("<Q", len(data)), data]
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated checkpoint: {what} needs {n} bytes, {len(self.buf) - self.pos} left",
                              self.pos)
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(buf: bytes) -> Checkpoint:
    r = _Reader(bytes(buf))
    if r.take(len(MAGIC), "magic") != MAGIC:
        raise FormatError("bad magic, not a checkpoint file", 0)
    at = r.pos
    (version,) = r.unpack("<I", "version")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} (this build reads {VERSION})", at)
    (n_meta,) = r.unpack("<I", "metadata length")
    at = r.pos
    try:
        text = r.take(n_meta, "metadata").decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"metadata is not UTF-8 ({exc.reason})", at + exc.start) from None
    meta = {}
    for line in text.splitlines():
        if "=" not in line:
            raise FormatError(f"metadata line without '=': {line[:40]!r}", at)
        k, v = line.split("=", 1)
        meta[k] = v
    (n_blocks,) = r.unpack("<I", "block count")
    arrays = {}
    for _ in range(n_blocks):
        (n_name,) = r.unpack("<H", "block name length")
        at = r.pos
        try:
            name = r.take(n_name, "block name").decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("block name is not UTF-8", at) from None
        if name in arrays:
            raise FormatError(f"duplicate block {name!r}", at)
        (ndim,) = r.unpack("<B", "rank")
        shape = r.unpack(f"<{ndim}I", "shape")
        at = r.pos
        (nbytes,) = r.unpack("<Q", "block length")
        expected = 4 * int(np.prod(shape, dtype=np.int64))
        if nbytes != expected:
            raise FormatError(f"block {name!r}: length {nbytes} does not match shape {shape} ({expected})", at)
        data = r.take(nbytes, f"block {name!r}")
        arrays[name] = np.frombuffer(data, dtype=_F32).reshape(shape).astype(np.float32)
    if r.pos != len(r.buf):
        raise FormatError(f"{len(r.buf) - r.pos} trailing bytes after the last block", r.pos)
    return Checkpoint(meta, arrays)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    data = encode_checkpoint(ckpt)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def load_checkpoint(path) -> Checkpoint:
    """Raises FileNotFoundError for a missing file and FormatError for a
    corrupt one; nothing partial is returned."""
    return decode_checkpoint(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# models <-> checkpoints

def model_checkpoint(model, metadata: dict | None = None) -> Checkpoint:
    from .models import spec_metadata
    meta = dict(spec_metadata(model.spec))
    meta.update(metadata or {})
    return Checkpoint(meta, {k: np.asarray(v, dtype=np.float32) for k, v in model.state_arrays().items()})


def model_from_checkpoint(ckpt: Checkpoint):
    from .models import build_model, spec_from_metadata
    model = build_model(spec_from_metadata(ckpt.metadata), seed=0)
    model.load_arrays(ckpt.arrays)
    model.eval()
    return model


def checkpoint_roundtrip(model, path, metadata: dict | None = None):
    save_checkpoint(path, model_checkpoint(model, metadata))
    return model_from_checkpoint(load_checkpoint(path))
