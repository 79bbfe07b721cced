import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fieldclt.errors import BoundsError, DimensionError, DomainError
from fieldclt.lattice import (FieldArray, Rect, build_summed_area, rect_sum, sheet_value,
                              sheet_values)

SMALL = np.array([[1.0, 2.0], [3.0, 4.0]])


def test_rect_basics():
    r = Rect(3, 5)
    assert r.cardinality == 15
    assert Rect.parse("8x8") == Rect(8, 8)
    assert str(r) == "3x5"
    with pytest.raises(DimensionError):
        Rect(0, 4)
    with pytest.raises(DimensionError):
        Rect.parse("8 by 8")


def test_field_array_indexing():
    f = FieldArray(np.arange(12.0).reshape(3, 4), origin=(-1, 2))
    assert f.at(-1, 2) == 0.0
    assert f.at(1, 5) == 11.0
    assert f.window((0, 3), (1, 4)).values.tolist() == [[5.0, 6.0], [9.0, 10.0]]
    with pytest.raises(BoundsError):
        f.at(2, 2)
    with pytest.raises(DomainError):
        FieldArray(np.array([[np.nan]]))


def test_summed_area_small():
    t = build_summed_area(FieldArray(SMALL))
    assert t.cum[-1, -1] == 10.0
    assert np.all(t.cum[0] == 0) and np.all(t.cum[:, 0] == 0)


def test_summed_area_zero_field():
    t = build_summed_area(np.zeros((5, 5)))
    assert not t.cum.any()


def test_summed_area_rejects_empty():
    with pytest.raises(DimensionError):
        build_summed_area(np.zeros((0, 3)))


def test_summed_area_is_read_only():
    t = build_summed_area(SMALL)
    with pytest.raises(ValueError):
        t.cum[1, 1] = 0.0


def test_summed_area_matches_brute_force():
    x = np.random.default_rng(0).integers(-9, 10, size=(3, 3)).astype(float)
    t = build_summed_area(x)
    for i in range(4):
        for j in range(4):
            assert t.cum[i, j] == sum(x[r, s] for r in range(i) for s in range(j))


def test_rect_sum_examples():
    t = build_summed_area(SMALL)
    assert rect_sum(t, (1, 1), (2, 2)) == 10.0
    assert rect_sum(t, (2, 2), (2, 2)) == 4.0
    with pytest.raises(BoundsError):
        rect_sum(t, (0, 1), (2, 2))
    with pytest.raises(BoundsError):
        rect_sum(t, (2, 1), (1, 2))


def test_rect_sum_random_subrectangles():
    g = np.random.default_rng(1)
    x = g.standard_normal((8, 8))
    t = build_summed_area(x)
    for _ in range(50):
        a, c = sorted(g.integers(1, 9, 2))
        b, d = sorted(g.integers(1, 9, 2))
        direct = x[a - 1:c, b - 1:d].sum()
        assert rect_sum(t, (a, b), (c, d)) == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_sheet_value_examples():
    t = build_summed_area(SMALL)
    assert sheet_value(t, (1, 1)) == 10.0
    assert sheet_value(t, (0, 0.7)) == 0.0
    assert sheet_value(t, (0.5, 0.5), Rect(2, 2)) == 1.0
    with pytest.raises(DomainError):
        sheet_value(t, (1.2, 0.5))


def test_sheet_value_fractional_overlap():
    # [0, 1.5] x [0, 2]: full first row plus half of the second
    t = build_summed_area(SMALL)
    assert sheet_value(t, (0.75, 1.0)) == pytest.approx(3.0 + 0.5 * 7.0)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 7), st.integers(1, 7)),
              elements=st.floats(-100, 100)))
def test_sheet_value_on_grid_equals_rect_sum(x):
    t = build_summed_area(x)
    m1, m2 = x.shape
    for k1 in range(1, m1 + 1):
        for k2 in range(1, m2 + 1):
            assert sheet_value(t, (k1 / m1, k2 / m2)) == rect_sum(t, (1, 1), (k1, k2))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=st.floats(0, 10)),
       st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=2))
def test_sheet_value_monotone_for_nonnegative_fields(x, pts):
    t = build_summed_area(x)
    (a, b), (c, d) = pts
    lo, hi = (min(a, c), min(b, d)), (max(a, c), max(b, d))
    assert sheet_value(t, lo) <= sheet_value(t, hi) + 1e-9


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 6), st.integers(2, 6)), elements=st.floats(-5, 5)),
       st.data())
def test_rect_sum_additive_over_split(x, data):
    t = build_summed_area(x)
    m1, m2 = x.shape
    k = data.draw(st.integers(1, m1 - 1))
    whole = rect_sum(t, (1, 1), (m1, m2))
    parts = rect_sum(t, (1, 1), (k, m2)) + rect_sum(t, (k + 1, 1), (m1, m2))
    assert parts == pytest.approx(whole, rel=1e-9, abs=1e-9)


def test_sheet_values_batch_matches_scalar():
    x = np.random.default_rng(2).standard_normal((3, 5, 4))
    ts = np.array([[0.3, 0.9], [1.0, 1.0], [0.5, 0.25]])
    out = sheet_values(x, ts)
    for r in range(3):
        t = build_summed_area(x[r])
        for p, pt in enumerate(ts):
            assert out[r, p] == pytest.approx(sheet_value(t, pt), abs=1e-12)


def test_sheet_value_continuous():
    x = np.random.default_rng(3).standard_normal((6, 6))
    t = build_summed_area(x)
    a = sheet_value(t, (0.5, 0.5))
    b = sheet_value(t, (0.5 + 1e-9, 0.5))
    assert abs(a - b) < 1e-6
