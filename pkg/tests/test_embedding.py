import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_diff, rel_err
from slimlm.embedding import (
    EmbeddingPool,
    PoolGradient,
    embed_backward,
    embed_forward,
    materialize_dense,
    param_count,
)
from slimlm.mapping import SubVectorMapping, build_balanced_mapping
from slimlm.rng import SplitMix64


def toy_pool():
    table = np.array([[0, 2], [1, 3]])
    mapping = SubVectorMapping(2, 2, 4, "balanced", 0, table)
    pool = EmbeddingPool(mapping, np.array([[1.0], [-1.0], [0.5], [2.0]]))
    return mapping, pool


def test_forward_concatenates_mapped_rows():
    mapping, pool = toy_pool()
    np.testing.assert_array_equal(
        embed_forward(pool, mapping, np.array([0, 1])),
        [[1.0, 0.5], [-1.0, 2.0]],
    )


def test_forward_shapes_follow_words():
    mapping, pool = toy_pool()
    assert embed_forward(pool, mapping, 1).shape == (2,)
    assert embed_forward(pool, mapping, np.zeros((3,), int)).shape == (3, 2)
    assert embed_forward(pool, mapping, np.zeros((4, 3), int)).shape == (4, 3, 2)


@given(
    st.integers(min_value=1, max_value=20),
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=1, max_value=3),
    st.integers(min_value=0, max_value=2**64 - 1),
)
@settings(max_examples=40)
def test_forward_matches_materialized_rows(vocab, parts, sub_dim, seed):
    mapping = build_balanced_mapping(vocab, parts, min(parts * vocab, 7), seed)
    rng = SplitMix64(seed)
    pool = EmbeddingPool(
        mapping, rng.uniform_array(-1, 1, (mapping.pool_size, sub_dim))
    )
    dense = materialize_dense(pool, mapping)
    assert dense.shape == (vocab, parts * sub_dim)
    words = np.arange(vocab)
    np.testing.assert_array_equal(embed_forward(pool, mapping, words), dense)


def test_backward_accumulates_duplicates():
    mapping, pool = toy_pool()
    grad = PoolGradient.zeros_like(pool)
    upstream = np.array([[1.0, 2.0], [10.0, 20.0]])
    embed_backward(grad, mapping, np.array([0, 0]), upstream)
    # word 0 maps to rows (0, 2); both batch entries hit the same rows
    np.testing.assert_array_equal(grad.data, [[11.0], [0.0], [22.0], [0.0]])


def test_backward_matches_finite_differences():
    rng = SplitMix64(5)
    mapping = build_balanced_mapping(6, 3, 5, seed=2)
    pool = EmbeddingPool(mapping, rng.uniform_array(-1, 1, (5, 2)))
    words = np.array([[0, 3], [5, 0], [2, 2]])
    weights = rng.uniform_array(-1, 1, (3, 2, 6))  # arbitrary upstream

    def objective(data):
        trial = EmbeddingPool(mapping, data)
        return float((embed_forward(trial, mapping, words) * weights).sum())

    grad = PoolGradient.zeros_like(pool)
    embed_backward(grad, mapping, words, weights)
    fd = central_diff(objective, pool.data.copy())
    assert rel_err(grad.data, fd).max() < 1e-8


def test_backward_rejects_bad_upstream_shape():
    mapping, pool = toy_pool()
    grad = PoolGradient.zeros_like(pool)
    with pytest.raises(ValueError, match="upstream shape"):
        embed_backward(grad, mapping, np.array([0]), np.zeros((1, 3)))


def test_forward_rejects_out_of_range_ids():
    mapping, pool = toy_pool()
    with pytest.raises(ValueError, match="word id"):
        embed_forward(pool, mapping, np.array([2]))


def test_pool_row_count_must_match_mapping():
    mapping, _ = toy_pool()
    with pytest.raises(ValueError, match="rows"):
        EmbeddingPool(mapping, np.zeros((3, 1)))


def test_param_count_toy_ratio():
    compressed, uncompressed, ratio = param_count(4, 4, 2, 3)
    assert (compressed, uncompressed) == (6, 16)
    assert ratio == pytest.approx(3 / 8)
    with pytest.raises(ValueError):
        param_count(4, 5, 2, 3)  # parts must divide width


def test_gradient_reset():
    _, pool = toy_pool()
    grad = PoolGradient.zeros_like(pool)
    grad.data += 1.0
    grad.reset()
    assert (grad.data == 0).all()
