"""Splittable counter-based random streams.

A stream is identified by a 64-bit root seed plus a derivation path of
(label, index) pairs. Draws come from a Philox generator keyed by that
path, so results depend only on (seed, path) and never on the order in
which sibling streams are consumed.
"""
import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_hash(label: str) -> int:
    return int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")


class RngStream:
    def __init__(self, seed: int, _path=()):
        self.seed = int(seed) & _MASK64
        self._path = tuple(_path)
        self._gen = None

    def derive(self, label: str, index: int = 0) -> "RngStream":
        """Child stream for (label, index); independent of sibling streams."""
        return RngStream(self.seed, self._path + ((label, int(index)),))

    @property
    def generator(self) -> np.random.Generator:
        if self._gen is None:
            entropy = [self.seed]
            for label, index in self._path:
                entropy.append(_label_hash(label))
                entropy.append(index & _MASK64)
            self._gen = np.random.Generator(
                np.random.Philox(np.random.SeedSequence(entropy))
            )
        return self._gen

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None):
        return self.generator.normal(loc, scale, size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, path={self._path})"
