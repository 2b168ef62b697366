"""Fixed word -> sub-vector assignment tables.

Each word's embedding is the concatenation of K sub-vectors drawn from a
shared pool of M rows.  The V x K table assigning pool rows to (word,
position) slots is built once, before training, and never changes.

Three construction schemes:

* ``balanced``  — a shuffled list of pool indices with usage counts as
  even as possible (max - min <= 1); any index may appear at any position.
* ``partitioned`` — position p draws only from partition
  ``[p*M/K, (p+1)*M/K)``, balanced within each position.  Disjoint
  positions are what make the two-step softmax evaluation possible.
* ``hashed`` — position-partitioned like the above, but the row inside
  the partition is ``hash(seed, word, p) % (M/K)``; no balance guarantee.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import SplitMix64, hash_u64s_vec

SCHEMES = ("balanced", "partitioned", "hashed")


@dataclass(frozen=True)
class SubVectorMapping:
    """Immutable V x K table of pool row indices, all in [0, pool_size)."""

    vocab_size: int
    parts_per_word: int
    pool_size: int
    scheme: str
    seed: int
    table: np.ndarray

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")
        table = np.ascontiguousarray(self.table, dtype=np.int64)
        if table.shape != (self.vocab_size, self.parts_per_word):
            raise ValueError(
                f"table shape {table.shape} != "
                f"({self.vocab_size}, {self.parts_per_word})"
            )
        if table.size and (table.min() < 0 or table.max() >= self.pool_size):
            raise ValueError("table entry outside [0, pool_size)")
        if self.scheme in ("partitioned", "hashed"):
            if self.pool_size % self.parts_per_word:
                raise ValueError("partitioned pool_size must be divisible by K")
            part = self.pool_size // self.parts_per_word
            positions = np.arange(self.parts_per_word, dtype=np.int64)
            if not (table // part == positions[None, :]).all():
                raise ValueError("entry outside its position's partition")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def partition_size(self) -> int:
        return self.pool_size // self.parts_per_word

    def is_position_partitioned(self) -> bool:
        return self.scheme in ("partitioned", "hashed")

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubVectorMapping):
            return NotImplemented
        return (
            self.vocab_size == other.vocab_size
            and self.parts_per_word == other.parts_per_word
            and self.pool_size == other.pool_size
            and self.scheme == other.scheme
            and self.seed == other.seed
            and np.array_equal(self.table, other.table)
        )


def _check_dims(vocab_size: int, parts: int, pool_size: int) -> None:
    if vocab_size < 1 or parts < 1:
        raise ValueError("vocab_size and parts_per_word must be >= 1")
    if pool_size < 1:
        raise ValueError("pool_size must be >= 1")


def _balanced_fill(slots: int, pool_size: int, rng: SplitMix64) -> np.ndarray:
    """Shuffled length-`slots` index list with per-index usage max-min <= 1.

    Whole copies of [0, pool_size) plus, when pool_size does not divide
    slots, a partial copy drawn without replacement, then a full shuffle.
    Truncating before the shuffle is what guarantees the <=1 imbalance.
    """
    copies, rem = divmod(slots, pool_size)
    pieces = [np.tile(np.arange(pool_size, dtype=np.int64), copies)]
    if rem:
        extra = np.arange(pool_size, dtype=np.int64)
        rng.shuffle(extra)
        pieces.append(extra[:rem])
    filled = np.concatenate(pieces)
    rng.shuffle(filled)
    return filled


def build_balanced_mapping(
    vocab_size: int, parts: int, pool_size: int, seed: int
) -> SubVectorMapping:
    """Balanced random assignment: usage counts differ pairwise by <= 1."""
    _check_dims(vocab_size, parts, pool_size)
    if pool_size > parts * vocab_size:
        raise ValueError(
            f"pool_size {pool_size} exceeds slot count {parts * vocab_size}"
        )
    rng = SplitMix64(seed)
    table = _balanced_fill(parts * vocab_size, pool_size, rng).reshape(
        vocab_size, parts
    )
    return SubVectorMapping(vocab_size, parts, pool_size, "balanced", seed, table)


def build_partitioned_mapping(
    vocab_size: int, parts: int, pool_size: int, seed: int
) -> SubVectorMapping:
    """Balanced assignment within disjoint per-position partitions."""
    _check_dims(vocab_size, parts, pool_size)
    if pool_size % parts:
        raise ValueError(f"parts {parts} must divide pool_size {pool_size}")
    part = pool_size // parts
    if part > vocab_size:
        raise ValueError(f"partition size {part} exceeds vocab_size {vocab_size}")
    rng = SplitMix64(seed)
    cols = [
        p * part + _balanced_fill(vocab_size, part, rng) for p in range(parts)
    ]
    table = np.stack(cols, axis=1)
    return SubVectorMapping(
        vocab_size, parts, pool_size, "partitioned", seed, table
    )


def build_hashed_mapping(
    vocab_size: int, parts: int, pool_size: int, seed: int
) -> SubVectorMapping:
    """Hash-driven assignment inside per-position partitions."""
    _check_dims(vocab_size, parts, pool_size)
    if pool_size % parts:
        raise ValueError(f"parts {parts} must divide pool_size {pool_size}")
    part = pool_size // parts
    words = np.arange(vocab_size, dtype=np.uint64)
    cols = [
        p * part + (hash_u64s_vec(seed, words, p) % np.uint64(part)).astype(np.int64)
        for p in range(parts)
    ]
    table = np.stack(cols, axis=1)
    return SubVectorMapping(vocab_size, parts, pool_size, "hashed", seed, table)


def build_mapping(
    scheme: str, vocab_size: int, parts: int, pool_size: int, seed: int
) -> SubVectorMapping:
    builders = {
        "balanced": build_balanced_mapping,
        "partitioned": build_partitioned_mapping,
        "hashed": build_hashed_mapping,
    }
    if scheme not in builders:
        raise ValueError(f"unknown scheme {scheme!r}")
    return builders[scheme](vocab_size, parts, pool_size, seed)


def usage_histogram(mapping: SubVectorMapping) -> np.ndarray:
    """Per-pool-row usage counts; sums to V * K."""
    return np.bincount(mapping.table.ravel(), minlength=mapping.pool_size)


def save_mapping(mapping: SubVectorMapping, path) -> None:
    """Text format: `V K M scheme seed` header, then V rows of K indices."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_mapping(mapping))


def serialize_mapping(mapping: SubVectorMapping) -> str:
    lines = [
        f"{mapping.vocab_size} {mapping.parts_per_word} {mapping.pool_size} "
        f"{mapping.scheme} {mapping.seed}"
    ]
    lines.extend(" ".join(str(v) for v in row) for row in mapping.table)
    return "\n".join(lines) + "\n"


def load_mapping(path) -> SubVectorMapping:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mapping(fh.read())


def parse_mapping(text: str) -> SubVectorMapping:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty mapping file")
    header = lines[0].split()
    if len(header) != 5:
        raise ValueError(f"malformed mapping header: {lines[0]!r}")
    try:
        vocab_size, parts, pool_size = (int(x) for x in header[:3])
        seed = int(header[4])
    except ValueError as exc:
        raise ValueError(f"malformed mapping header: {lines[0]!r}") from exc
    scheme = header[3]
    rows = [ln.split() for ln in lines[1:] if ln.strip()]
    if len(rows) != vocab_size:
        raise ValueError(
            f"header says {vocab_size} rows, file has {len(rows)}"
        )
    try:
        table = np.array([[int(v) for v in row] for row in rows], dtype=np.int64)
    except ValueError as exc:
        raise ValueError("non-integer table entry") from exc
    if vocab_size and table.shape[1] != parts:
        raise ValueError(f"row width != {parts}")
    return SubVectorMapping(vocab_size, parts, pool_size, scheme, seed, table)
