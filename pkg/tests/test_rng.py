import numpy as np
import pytest

from zop.rng import BLOCK, CounterStream, derive_key


def test_rows_are_pure_functions_of_index():
    s = CounterStream(7, ("a",))
    full = s.normals(0, 3000, 4)
    for start, count in [(0, 1), (5, 10), (1020, 10), (2047, 900)]:
        fresh = CounterStream(7, ("a",))
        np.testing.assert_array_equal(fresh.normals(start, count, 4), full[start:start + count])


def test_request_order_does_not_matter():
    a = CounterStream(3).uniforms(0, 2 * BLOCK + 5)
    s = CounterStream(3)
    tail = s.uniforms(BLOCK + 1, BLOCK + 4)
    head = s.uniforms(0, BLOCK + 1)
    np.testing.assert_array_equal(np.vstack([head, tail]), a)


def test_split_and_seed_give_different_streams():
    base = CounterStream(1, ("x",))
    assert not np.array_equal(base.normals(0, 8, 1), base.split("y").normals(0, 8, 1))
    assert not np.array_equal(base.normals(0, 8, 1), CounterStream(2, ("x",)).normals(0, 8, 1))


def test_key_uses_both_seed_words():
    assert not np.array_equal(derive_key(1, ()), derive_key(1 + 2 ** 32, ()))


def test_seed_range():
    with pytest.raises(ValueError):
        CounterStream(-1)
    with pytest.raises(ValueError):
        CounterStream(2 ** 64)
    CounterStream(2 ** 64 - 1)


def test_uniform_scalar_matches_table():
    s = CounterStream(11)
    assert s.uniform(17) == s.uniforms(0, 20)[17, 0]
