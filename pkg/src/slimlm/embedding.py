"""Compressed input embedding: pooled sub-vectors gathered per word.

A word's N-dimensional embedding is the concatenation of the K pool rows
named by its mapping table row, so the layer stores M x (N/K) parameters
instead of V x N.  Gradients scatter-add back into the same pool rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mapping import SubVectorMapping


@dataclass
class EmbeddingPool:
    """M x d matrix of shared sub-vectors plus its fixed assignment table."""

    mapping: SubVectorMapping
    data: np.ndarray  # (M, d) float64

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.shape[0] != self.mapping.pool_size:
            raise ValueError(
                f"pool has {self.data.shape[0]} rows, mapping expects "
                f"{self.mapping.pool_size}"
            )

    @property
    def pool_size(self) -> int:
        return self.data.shape[0]

    @property
    def sub_dim(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        """Full embedding width N = K * d."""
        return self.mapping.parts_per_word * self.data.shape[1]


@dataclass
class PoolGradient:
    """Accumulator with the same shape as its pool; zeroed between steps."""

    data: np.ndarray

    @classmethod
    def zeros_like(cls, pool: EmbeddingPool) -> "PoolGradient":
        return cls(np.zeros_like(pool.data))

    def reset(self) -> None:
        self.data.fill(0.0)


def _check_words(words: np.ndarray, vocab_size: int) -> np.ndarray:
    words = np.asarray(words)
    if words.size and (words.min() < 0 or words.max() >= vocab_size):
        raise ValueError(f"word id outside [0, {vocab_size})")
    return words


def embed_forward(
    pool: EmbeddingPool, mapping: SubVectorMapping, words
) -> np.ndarray:
    """Embedding of `words`: shape (*words.shape, N), slice p = pool row
    table[word][p]."""
    words = _check_words(words, mapping.vocab_size)
    rows = mapping.table[words]  # (*shape, K)
    return pool.data[rows].reshape(*words.shape, -1)


def embed_backward(
    grad: PoolGradient, mapping: SubVectorMapping, words, upstream: np.ndarray
) -> None:
    """Scatter-add `upstream` slices into the pool rows used by `words`.

    Accumulates; the caller resets the buffer between optimizer steps.
    """
    words = _check_words(words, mapping.vocab_size)
    parts = mapping.parts_per_word
    sub_dim = grad.data.shape[1]
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (*words.shape, parts * sub_dim):
        raise ValueError(
            f"upstream shape {upstream.shape} != {(*words.shape, parts * sub_dim)}"
        )
    rows = mapping.table[words].reshape(-1)
    slices = upstream.reshape(-1, parts, sub_dim).reshape(-1, sub_dim)
    np.add.at(grad.data, rows, slices)


def materialize_dense(pool: EmbeddingPool, mapping: SubVectorMapping) -> np.ndarray:
    """The effective V x N embedding matrix, row w = embed_forward(w)."""
    return pool.data[mapping.table].reshape(mapping.vocab_size, -1)


def param_count(
    vocab_size: int, width: int, parts: int, pool_size: int
) -> tuple[int, int, float]:
    """(compressed, uncompressed, ratio) parameter counts for the layer.

    The mapping table itself is not counted, only the pool entries.
    """
    if width % parts:
        raise ValueError(f"parts {parts} must divide embedding width {width}")
    compressed = pool_size * (width // parts)
    uncompressed = vocab_size * width
    return compressed, uncompressed, pool_size / (parts * vocab_size)
