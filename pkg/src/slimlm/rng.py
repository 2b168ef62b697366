"""Deterministic randomness shared by every component.

Reproducibility of the whole artifact (assignment tables, weight init,
dropout masks, noise draws) hinges on one fixed, platform-independent
generator, so everything random flows through the primitives below:

* stream generator: SplitMix64.  The generator is counter based; output
  number ``i`` (1-indexed) is ``mix64(seed + i * GOLDEN)``, which lets the
  scalar and the vectorized paths produce bit-identical streams.
* bounded integers: ``next_u64() % bound``.
* unit doubles: top 53 bits of the output, ``(u >> 11) * 2**-53``.
* Fisher-Yates shuffle: for ``i = n-1 .. 1`` swap positions ``i`` and
  ``next_below(i + 1)``.
* hashing and sub-seed derivation: 64-bit FNV-1a over little-endian bytes.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


def _mix64(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Counter-based SplitMix64 stream.

    State is just (seed, counter); drawing n values in one vectorized call
    yields the same stream as n scalar calls.
    """

    def __init__(self, seed: int):
        self.seed = seed & MASK64
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return _mix64((self.seed + self.counter * GOLDEN) & MASK64)

    def next_below(self, bound: int) -> int:
        if bound <= 0:
            raise ValueError("bound must be positive")
        return self.next_u64() % bound

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def next_u64_array(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        z = (np.uint64(self.seed) + idx * np.uint64(GOLDEN)).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    def float_array(self, shape) -> np.ndarray:
        n = int(np.prod(shape))
        u = self.next_u64_array(n)
        return ((u >> np.uint64(11)).astype(np.float64) * 2.0**-53).reshape(shape)

    def uniform_array(self, lo: float, hi: float, shape) -> np.ndarray:
        return lo + (hi - lo) * self.float_array(shape)

    def shuffle(self, arr) -> None:
        """In-place Fisher-Yates shuffle of a 1-d sequence or array."""
        n = len(arr)
        for i in range(n - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            arr[i], arr[j] = arr[j], arr[i]


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & MASK64
    return h


def hash_u64s(*values: int) -> int:
    """FNV-1a over the little-endian 8-byte encodings of the values."""
    return fnv1a64(b"".join((v & MASK64).to_bytes(8, "little") for v in values))


def hash_u64s_vec(seed: int, words: np.ndarray, part: int) -> np.ndarray:
    """Vectorized ``hash_u64s(seed, w, part)`` for an array of word ids."""
    w = np.asarray(words, dtype=np.uint64)
    h = np.full(w.shape, FNV_OFFSET, dtype=np.uint64)
    prime = np.uint64(FNV_PRIME)
    for k in range(8):
        h = (h ^ np.uint64((seed >> (8 * k)) & 0xFF)) * prime
    for k in range(8):
        h = (h ^ ((w >> np.uint64(8 * k)) & np.uint64(0xFF))) * prime
    for k in range(8):
        h = (h ^ np.uint64(((part & MASK64) >> (8 * k)) & 0xFF)) * prime
    return h


def derive_seed(master: int, tag: str) -> int:
    """Child seed for an independent reproducible stream, named by purpose."""
    return fnv1a64((master & MASK64).to_bytes(8, "little") + tag.encode("utf-8"))
