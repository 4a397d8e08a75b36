"""
Counter-based random streams keyed by (seed, label)
"""

import hashlib

import numpy as np


def label_key(label):
    """Map a label tuple of ints/strings to non-negative integer words"""
    words = []
    for part in label:
        if isinstance(part, (int, np.integer)):
            if part < 0:
                raise ValueError(f"negative label component {part}")
            words.append(int(part))
        else:
            digest = hashlib.blake2b(str(part).encode("utf-8"), digest_size=8).digest()
            words.append(int.from_bytes(digest, "little"))
    return tuple(words)


class RngStream:
    """Philox generator derived from a master seed and a label.

    The same (seed, label) always yields the same sequence, so work split
    across threads stays reproducible as long as each task owns its label.
    """

    __slots__ = ("seed", "label", "_generator")

    def __init__(self, seed, label=()):
        self.seed = int(seed)
        self.label = tuple(label)
        self._generator = None

    def child(self, *label):
        return RngStream(self.seed, self.label + tuple(label))

    @property
    def generator(self):
        if self._generator is None:
            sequence = np.random.SeedSequence(self.seed, spawn_key=label_key(self.label))
            self._generator = np.random.Generator(np.random.Philox(sequence))
        return self._generator

    def __repr__(self):
        return f"RngStream(seed={self.seed}, label={self.label!r})"


class RngFactory:
    """Root of all streams for one run"""

    def __init__(self, seed):
        self.seed = int(seed)

    def stream(self, *label):
        return RngStream(self.seed, label)


def as_generator(rng):
    """Accept an RngStream or a numpy Generator"""
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")
