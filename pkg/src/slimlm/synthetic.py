"""Deterministic synthetic corpus with mixed bigram/unigram structure.

Each word's successor is drawn mostly (75%) from a five-word window tied
to the current word ((3w + 1 + j) mod n_types) and otherwise from a
global Zipf distribution, with a fixed end-of-sentence probability.  The
bigram branch dominates so that word identity is genuinely predictive:
models that blur it (say, by giving many words one shared input
embedding row) pay a visible perplexity cost, while the Zipf branch
keeps a learnable unigram floor.  A short preamble enumerates every word
type once, pinning the vocabulary size (n_types + 2 reserved ids)
independent of the walk.

Defaults give a 1024-word vocabulary whose size divides cleanly by the
usual sub-vector counts, and roughly 14-token sentences.
"""

from __future__ import annotations

import numpy as np

from .rng import SplitMix64, derive_seed

N_TYPES = 1022
VOCAB_SIZE = N_TYPES + 2  # plus <eos> and <unk>


def _word(i: int) -> str:
    return f"w{i:04d}"


def _zipf_cumulative(n_types: int, exponent: float) -> np.ndarray:
    weights = 1.0 / np.arange(1, n_types + 1) ** exponent
    return np.cumsum(weights / weights.sum())


def coverage_preamble(n_types: int = N_TYPES, per_line: int = 50) -> list[str]:
    """Lines enumerating every word type once, in id order."""
    names = [_word(i) for i in range(n_types)]
    return [
        " ".join(names[i : i + per_line]) for i in range(0, n_types, per_line)
    ]


def generate_text(
    n_tokens: int,
    seed: int,
    n_types: int = N_TYPES,
    zipf_exponent: float = 1.1,
    p_eos: float = 0.07,
    p_bigram: float = 0.75,
    preamble: bool = False,
) -> str:
    """A corpus of roughly n_tokens word tokens (<eos> not counted)."""
    if n_tokens < 1:
        raise ValueError("n_tokens must be positive")
    rng = SplitMix64(seed)
    cumulative = _zipf_cumulative(n_types, zipf_exponent)
    u_eos = rng.float_array(n_tokens)
    u_branch = rng.float_array(n_tokens)
    zipf_draws = np.searchsorted(cumulative, rng.float_array(n_tokens), side="right")
    zipf_draws = np.minimum(zipf_draws, n_types - 1)
    offsets = rng.next_u64_array(n_tokens) % np.uint64(5)

    lines = coverage_preamble(n_types) if preamble else []
    sentence: list[str] = []
    word = int(zipf_draws[0])
    for i in range(n_tokens):
        sentence.append(_word(word))
        if u_eos[i] < p_eos:
            lines.append(" ".join(sentence))
            sentence = []
            word = int(zipf_draws[i])
        elif u_branch[i] < p_bigram:
            word = (3 * word + 1 + int(offsets[i])) % n_types
        else:
            word = int(zipf_draws[i])
    if sentence:
        lines.append(" ".join(sentence))
    return "\n".join(lines) + "\n"


def make_desk_corpus(
    seed: int = 11,
    train_tokens: int = 100_000,
    valid_tokens: int = 10_000,
    test_tokens: int = 10_000,
) -> tuple[str, str, str]:
    """(train, valid, test) texts from independent seeded walks; only the
    train split carries the vocabulary-pinning preamble."""
    train = generate_text(train_tokens, derive_seed(seed, "train"), preamble=True)
    valid = generate_text(valid_tokens, derive_seed(seed, "valid"))
    test = generate_text(test_tokens, derive_seed(seed, "test"))
    return train, valid, test
