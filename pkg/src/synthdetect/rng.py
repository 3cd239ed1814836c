"""Counter-based random streams keyed by (seed, purpose, epoch, index).

Every random draw in the toolkit comes from a stream derived here, so any
sample's randomness can be replayed without touching a global generator.
"""
from __future__ import annotations

import hashlib
import struct

import numpy as np


def _key(seed: int, tag: str, epoch: int, index: int) -> int:
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<qqq", int(seed), int(epoch), int(index)))
    h.update(tag.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


class RngStream:
    """A Philox generator whose key is a hash of the derivation tuple.

    Identical keys replay identical sequences; Philox's counter construction
    makes streams with different keys statistically independent.
    """

    def __init__(self, seed: int, tag: str, epoch: int = 0, index: int = 0):
        self.seed = int(seed)
        self.tag = tag
        self.epoch = int(epoch)
        self.index = int(index)
        self.generator = np.random.Generator(
            np.random.Philox(key=_key(self.seed, tag, self.epoch, self.index))
        )

    def child(self, tag: str, epoch: int | None = None, index: int = 0) -> "RngStream":
        return RngStream(self.seed, f"{self.tag}/{tag}",
                         self.epoch if epoch is None else epoch, index)

    @property
    def counter(self) -> int:
        return int(self.generator.bit_generator.state["state"]["counter"][0])

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def random(self, size=None):
        return self.generator.random(size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self.generator.choice(a, size=size, replace=replace)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, tag={self.tag!r}, epoch={self.epoch}, index={self.index})"
