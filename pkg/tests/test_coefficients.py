import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fieldclt.coefficients import CoefficientFamily, coefficient
from fieldclt.errors import DivergenceError, ParameterError

# Hurwitz-zeta closed forms evaluated with mpmath at 30 digits:
# product A_{k,l} = zeta(2q, k+1) zeta(2q, l+1)
# additive A_{k,l} = zeta(2q-1, c+1) - c zeta(2q, c+1), c = k+l
FROZEN = [
    (CoefficientFamily.product(2), 0, 0, 1.1714235822309350626),
    (CoefficientFamily.product(2), 3, 5, 0.000014740538713207710421),
    (CoefficientFamily.product(3), 1, 1, 0.00030078179899644493207),
    (CoefficientFamily.product(1.5), 10, 2, 0.00034867612847770234489),
    (CoefficientFamily.additive(2), 0, 0, 1.2020569031595942854),
    (CoefficientFamily.additive(2.5), 3, 5, 0.00016027491577831280614),
    (CoefficientFamily.additive(3), 1, 1, 0.0022416311744716469023),
    (CoefficientFamily.additive(1.6), 0, 7, 0.036504829873516593636),
]


def test_coefficient_examples():
    assert coefficient(CoefficientFamily.additive(2), 0, 0) == 1.0
    assert coefficient(CoefficientFamily.product(2), 1, 1) == 1 / 16
    for fam in (CoefficientFamily.additive(2), CoefficientFamily.product(3), CoefficientFamily.delta()):
        assert coefficient(fam, -1, 3) == 0.0


def test_explicit_table():
    fam = CoefficientFamily.explicit([[1.0, 0.5], [0.25, 0.0]])
    assert fam(1, 0) == 0.25
    assert fam(5, 5) == 0.0
    assert fam.tail_sum(0, 0).value == pytest.approx(1.3125)
    assert fam.support_radius == 1


@pytest.mark.parametrize("fam,k,l,truth", FROZEN)
def test_tail_sum_against_zeta_oracle(fam, k, l, truth):
    t = fam.tail_sum(k, l, rel_tol=1e-12)
    assert t.value == pytest.approx(truth, rel=1e-10)
    assert t.error_bound <= 1e-11 * truth


def test_tail_sum_delta():
    fam = CoefficientFamily.delta()
    assert fam.tail_sum(1, 1).value == 0.0
    assert fam.tail_sum(0, 0).value == 1.0


def test_tail_sum_clamps_negative_indices():
    fam = CoefficientFamily.additive(2.5)
    assert fam.tail_sum(-3, 2).value == fam.tail_sum(0, 2).value


def test_non_summable_rejected():
    with pytest.raises(DivergenceError):
        CoefficientFamily.product(1.0).tail_sum(0, 0)
    with pytest.raises(ParameterError):
        CoefficientFamily("additive")
    with pytest.raises(ParameterError):
        CoefficientFamily("banana", 2)


def test_tail_sum_matches_box_sum():
    fam = CoefficientFamily.additive(3)
    box = fam.box(400)
    direct = np.sum(box[5:, 2:] ** 2)
    # remaining mass outside the 400-box is below 1e-8 for q = 3
    assert fam.tail_sum(5, 2).value == pytest.approx(direct, rel=1e-6)


def test_default_truncation_meets_budget():
    fam = CoefficientFamily.product(3)
    B = fam.default_truncation()
    total = fam.total_sum_sq()
    assert fam.omitted_sum_sq(B) < 1e-4 * total
    assert fam.omitted_sum_sq(B - 1) >= 1e-4 * total


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["additive", "product"]), st.floats(1.2, 4.0),
       st.integers(0, 30), st.integers(0, 30), st.integers(0, 3), st.integers(0, 3))
def test_tail_sum_monotone(kind, q, k, l, dk, dl):
    fam = CoefficientFamily(kind, q)
    assert fam.tail_sum(k + dk, l + dl).value <= fam.tail_sum(k, l).value * (1 + 1e-9)
