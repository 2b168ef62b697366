"""Shared fixtures and numeric checking helpers."""

import numpy as np
import pytest

from slimlm.corpus import build_vocab, encode
from slimlm.synthetic import make_desk_corpus


def central_diff(f, x, eps=1e-5):
    """Central finite-difference gradient of scalar f at flat array x."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    g = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = f(x)
        flat[i] = orig - eps
        lo = f(x)
        flat[i] = orig
        g[i] = (hi - lo) / (2 * eps)
    return grad


def rel_err(analytic, numeric):
    """Per-coordinate |a - n| / max(1, |a|, |n|).

    The unit floor keeps finite-difference roundoff on near-zero
    coordinates from registering as error while still catching any real
    mismatch at the magnitudes the parameters actually take.
    """
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return np.abs(analytic - numeric) / denom


@pytest.fixture(scope="session")
def desk_corpus():
    """(vocab, train, valid, test) id streams of the synthetic desk corpus."""
    train_text, valid_text, test_text = make_desk_corpus()
    vocab = build_vocab(train_text)
    return (
        vocab,
        encode(vocab, train_text),
        encode(vocab, valid_text),
        encode(vocab, test_text),
    )


@pytest.fixture(scope="session")
def desk_corpus_files(tmp_path_factory):
    """The same corpus written out as text files for CLI-level tests."""
    root = tmp_path_factory.mktemp("desk_corpus")
    train_text, valid_text, test_text = make_desk_corpus()
    paths = {}
    for name, text in (
        ("train", train_text), ("valid", valid_text), ("test", test_text)
    ):
        p = root / f"{name}.txt"
        p.write_text(text, encoding="utf-8")
        paths[name] = p
    return paths
