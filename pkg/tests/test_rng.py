import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slimlm.rng import (
    MASK64,
    SplitMix64,
    derive_seed,
    fnv1a64,
    hash_u64s,
    hash_u64s_vec,
)

seeds = st.integers(min_value=0, max_value=MASK64)


def test_splitmix64_reference_stream():
    # published reference outputs for splitmix64 with seed 1234567
    r = SplitMix64(1234567)
    assert [r.next_u64() for _ in range(3)] == [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
    ]


def test_fnv1a64_published_vectors():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
    assert fnv1a64(b"foobar") == 0x85944171F73967E8


def test_outputs_are_64_bit():
    r = SplitMix64(2**64 - 1)  # seed at the mask boundary must not overflow
    for _ in range(100):
        assert 0 <= r.next_u64() <= MASK64


@given(seeds, st.integers(min_value=1, max_value=500))
@settings(max_examples=50)
def test_vectorized_stream_matches_scalar(seed, n):
    scalar = SplitMix64(seed)
    vector = SplitMix64(seed)
    expected = [scalar.next_u64() for _ in range(n)]
    got = vector.next_u64_array(n)
    assert got.dtype == np.uint64
    assert [int(v) for v in got] == expected


@given(seeds, st.integers(min_value=1, max_value=200))
@settings(max_examples=50)
def test_float_array_matches_scalar(seed, n):
    scalar = SplitMix64(seed)
    vector = SplitMix64(seed)
    expected = np.array([scalar.next_float() for _ in range(n)])
    np.testing.assert_array_equal(vector.float_array((n,)), expected)


def test_stream_is_resumable_mid_array():
    # interleaving scalar and vector draws must not disturb the stream
    a, b = SplitMix64(99), SplitMix64(99)
    ref = [a.next_u64() for _ in range(10)]
    got = [b.next_u64() for _ in range(3)]
    got += [int(v) for v in b.next_u64_array(4)]
    got += [b.next_u64() for _ in range(3)]
    assert got == ref


def test_next_float_range_and_spread():
    r = SplitMix64(7)
    xs = r.float_array((10000,))
    assert (0.0 <= xs).all() and (xs < 1.0).all()
    assert 0.45 < xs.mean() < 0.55


def test_uniform_respects_bounds():
    r = SplitMix64(3)
    xs = r.uniform_array(-0.05, 0.05, (1000,))
    assert (-0.05 <= xs).all() and (xs < 0.05).all()


@given(seeds, st.integers(min_value=1, max_value=1000))
@settings(max_examples=50)
def test_next_below_is_modulo_of_stream(seed, bound):
    a, b = SplitMix64(seed), SplitMix64(seed)
    for _ in range(20):
        assert a.next_below(bound) == b.next_u64() % bound


def test_shuffle_fixture():
    # regression fixture recorded from this generator; guards the exact
    # Fisher-Yates index rule j = u mod (i + 1)
    arr = np.arange(8)
    SplitMix64(42).shuffle(arr)
    assert list(arr) == [3, 1, 6, 2, 4, 0, 7, 5]


@given(seeds, st.integers(min_value=0, max_value=64))
@settings(max_examples=50)
def test_shuffle_is_a_permutation(seed, n):
    arr = np.arange(n)
    SplitMix64(seed).shuffle(arr)
    assert sorted(arr.tolist()) == list(range(n))


def test_shuffle_matches_manual_fisher_yates():
    seed = 1234
    n = 12
    draws = SplitMix64(seed)
    arr = list(range(n))
    for i in range(n - 1, 0, -1):
        j = draws.next_u64() % (i + 1)
        arr[i], arr[j] = arr[j], arr[i]
    mine = np.arange(n)
    SplitMix64(seed).shuffle(mine)
    assert list(mine) == arr


@given(seeds, st.lists(st.integers(min_value=0, max_value=MASK64), max_size=4))
@settings(max_examples=50)
def test_hash_u64s_is_order_sensitive_and_stable(seed, values):
    h1 = hash_u64s(seed, *values)
    assert h1 == hash_u64s(seed, *values)
    assert 0 <= h1 <= MASK64
    if len(values) >= 2 and values[0] != values[1]:
        swapped = [values[1], values[0]] + values[2:]
        assert hash_u64s(seed, *swapped) != h1


@given(seeds, st.integers(min_value=1, max_value=64), st.integers(0, 15))
@settings(max_examples=50)
def test_vectorized_hash_matches_scalar(seed, n, part):
    words = np.arange(n, dtype=np.uint64)
    vec = hash_u64s_vec(seed, words, part)
    for w in range(n):
        assert int(vec[w]) == hash_u64s(seed, w, part)


def test_derive_seed_separates_tags():
    tags = ["mapping/input", "mapping/output", "init", "dropout", "noise"]
    derived = {derive_seed(1, t) for t in tags}
    assert len(derived) == len(tags)
    # regression values for the two tags everything else depends on
    assert derive_seed(1, "mapping/input") == 10168336679016943861
    assert derive_seed(1, "mapping/output") == 16979505057668779738
