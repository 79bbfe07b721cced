import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldclt import rng
from fieldclt.rng import RngStream


def test_same_stream_is_bit_identical():
    a = RngStream(42, 7).normal(np.arange(1000))
    b = RngStream(42, 7).normal(np.arange(1000))
    assert np.array_equal(a, b)


def test_streams_and_seeds_differ():
    base = RngStream(1).uniform(np.arange(100))
    assert not np.array_equal(base, RngStream(2).uniform(np.arange(100)))
    assert not np.array_equal(base, RngStream(1, 1).uniform(np.arange(100)))


def test_child_composition():
    s = RngStream(9)
    assert s.child(3, 4) == s.child(3).child(4)
    assert s.child("outer") != s.child("inner")


def test_child_keys_match_child():
    s = RngStream(5).child("x")
    keys = s.child_keys(np.arange(6))
    assert all(keys[i] == s.child(i).key for i in range(6))


def test_counter_access_is_order_free():
    s = RngStream(3)
    whole = s.bits(np.arange(50))
    assert np.array_equal(whole[[7, 3, 40]], s.bits(np.array([7, 3, 40])))


def test_uniform_strictly_inside_unit_interval():
    bits = np.array([0, np.iinfo(np.uint64).max], dtype=np.uint64)
    u = rng.bits_to_uniform(bits)
    assert np.all(u > 0) and np.all(u < 1)


def test_normal_moments():
    x = RngStream(11).normal(np.arange(1_000_000))
    n = x.size
    assert abs(x.mean()) < 3 / np.sqrt(n)
    assert abs(x.var() - 1) < 3 * np.sqrt(2 / n)


def test_signs_balanced():
    bits = RngStream(4).bits(np.arange(100_000))
    s = rng.bits_to_sign(bits)
    assert set(np.unique(s)) == {-1.0, 1.0}
    assert abs(s.mean()) < 3 / np.sqrt(s.size)


def test_cell_counter_is_injective_on_a_block():
    c = rng.lattice_counters(-20, -20, 41, 41)
    assert np.unique(c).size == c.size


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**64 - 1), st.integers(-1000, 1000), st.integers(-1000, 1000))
def test_cell_draw_independent_of_block(seed, i, j):
    s = RngStream(seed)
    block = s.bits(rng.lattice_counters(i - 2, j - 3, 5, 5))
    assert block[2, 3] == s.bits(rng.cell_counter(i, j))
