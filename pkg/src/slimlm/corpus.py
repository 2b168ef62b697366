"""Vocabulary handling and contiguous-stream batching.

Text is whitespace-tokenized one sentence per line; every line emits a
trailing ``<eos>``.  Ids 0 and 1 are pinned to ``<eos>`` and ``<unk>``;
literal occurrences of either token in the text merge into the reserved
entry.  Remaining words rank by (count desc, first occurrence asc).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import FNV_OFFSET, FNV_PRIME, MASK64, fnv1a64

EOS = "<eos>"
UNK = "<unk>"
EOS_ID = 0
UNK_ID = 1


@dataclass
class Vocabulary:
    tokens: list[str]
    counts: list[int]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.tokens) != len(self.counts):
            raise ValueError("token/count length mismatch")
        if len(self.tokens) < 2 or self.tokens[0] != EOS or self.tokens[1] != UNK:
            raise ValueError(f"ids 0 and 1 must be {EOS!r} and {UNK!r}")
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate token in vocabulary")

    @property
    def size(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def fingerprint(self) -> int:
        """Order-sensitive 64-bit hash of the (token, count) sequence."""
        h = FNV_OFFSET
        for tok, cnt in zip(self.tokens, self.counts):
            h = (h ^ fnv1a64(tok.encode("utf-8"))) * FNV_PRIME & MASK64
            h = (h ^ (cnt & MASK64)) * FNV_PRIME & MASK64
        return h


def tokenize_lines(text: str) -> list[list[str]]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return [line.split() for line in lines]


def build_vocab(
    text: str, min_count: int = 1, max_size: int | None = None
) -> Vocabulary:
    """Count tokens and build a ranked vocabulary.

    Words seen fewer than min_count times, or cut by the max_size cap
    (which includes the two reserved ids), fold their counts into <unk>.
    """
    if max_size is not None and max_size < 2:
        raise ValueError("max_size must be at least 2 (reserved ids)")
    counts: dict[str, int] = {}
    n_lines = 0
    for toks in tokenize_lines(text):
        n_lines += 1
        for tok in toks:
            counts[tok] = counts.get(tok, 0) + 1
    if n_lines == 0:
        raise ValueError("empty corpus")
    eos_count = counts.pop(EOS, 0) + n_lines
    unk_count = counts.pop(UNK, 0)
    order = {tok: i for i, tok in enumerate(counts)}
    ranked = sorted(counts, key=lambda t: (-counts[t], order[t]))
    keep = len(ranked)
    while keep and counts[ranked[keep - 1]] < min_count:
        keep -= 1
    if max_size is not None:
        keep = min(keep, max_size - 2)
    for tok in ranked[keep:]:
        unk_count += counts[tok]
    ranked = ranked[:keep]
    tokens = [EOS, UNK] + ranked
    final_counts = [eos_count, unk_count] + [counts[t] for t in ranked]
    return Vocabulary(tokens, final_counts)


def encode(vocab: Vocabulary, text: str) -> np.ndarray:
    """Flatten text to one id stream, <eos>-terminated per line."""
    ids: list[int] = []
    for toks in tokenize_lines(text):
        ids.extend(vocab.id_of(t) for t in toks)
        ids.append(EOS_ID)
    return np.asarray(ids, dtype=np.int64)


def unigram_counts(stream: np.ndarray, vocab_size: int) -> np.ndarray:
    """Occurrence counts of each id in a stream (for noise distributions)."""
    return np.bincount(stream, minlength=vocab_size).astype(np.int64)


def save_vocab(path, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tok, cnt in zip(vocab.tokens, vocab.counts):
            fh.write(f"{tok} {cnt}\n")


def load_vocab(path) -> Vocabulary:
    tokens: list[str] = []
    counts: list[int] = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ValueError(f"{path}:{ln}: expected 'token count'")
            try:
                cnt = int(parts[1])
            except ValueError:
                raise ValueError(f"{path}:{ln}: count is not an integer") from None
            tokens.append(parts[0])
            counts.append(cnt)
    return Vocabulary(tokens, counts)


def batchify(stream: np.ndarray, batch_size: int) -> np.ndarray:
    """Chop one id stream into batch_size parallel streams, shape (B, L).

    The trailing remainder that does not fill a full column is dropped.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    per = len(stream) // batch_size
    if per < 2:
        raise ValueError(
            f"stream of {len(stream)} tokens too short for batch_size {batch_size}"
        )
    return stream[: per * batch_size].reshape(batch_size, per)


def windows(batched: np.ndarray, bptt_len: int):
    """Yield (inputs, targets) windows of shape (T, B), time-major.

    targets[t] = inputs[t] shifted one step ahead in the stream; the last
    window may be shorter than bptt_len.
    """
    if bptt_len < 1:
        raise ValueError("bptt_len must be positive")
    per = batched.shape[1]
    for start in range(0, per - 1, bptt_len):
        stop = min(start + bptt_len, per - 1)
        x = batched[:, start:stop].T
        y = batched[:, start + 1 : stop + 1].T
        yield np.ascontiguousarray(x), np.ascontiguousarray(y)
