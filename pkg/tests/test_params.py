import math
from decimal import Decimal, getcontext

import pytest
from hypothesis import given, strategies as st

from reliablesketch.params import (
    derive_lambda,
    derive_W,
    derive_W_proof,
    layer_threshold,
    layer_thresholds,
    layer_width,
    stash_size_hint,
)

getcontext().prec = 60


def dec_width(W, rw, i):
    rw = Decimal(str(rw))
    return max(1, math.ceil(Decimal(W) * (rw - 1) / rw**i))


def dec_threshold(lam, rl, i):
    rl = Decimal(str(rl))
    return math.floor(Decimal(lam) * (rl - 1) / rl**i)


def dec_const(rw, rl):
    rw, rl = Decimal(str(rw)), Decimal(str(rl))
    return (rw * rl) ** 2 / ((rw - 1) * (rl - 1))


def test_width_examples():
    assert [layer_width(1000, 2, i) for i in (1, 2, 3)] == [500, 250, 125]
    assert [layer_width(1000, 10, i) for i in (1, 2)] == [900, 90]
    assert layer_width(1, 3.7, 1) >= 1
    assert layer_width(1, 2, 9) == 1


def test_threshold_examples():
    assert [layer_threshold(25, 2.5, i) for i in range(1, 5)] == [15, 6, 2, 0]
    assert layer_thresholds(25, 2.5, 7) == [15, 6, 2]
    assert sum(layer_thresholds(25, 2.5, 7)) <= 25
    assert [layer_threshold(25, 2, i) for i in range(1, 6)] == [12, 6, 3, 1, 0]
    assert layer_thresholds(0, 2.5, 7) == []


def test_derive_lambda_examples():
    assert derive_lambda(100_000, 1_000_000, 2, 2.5) == 167
    assert derive_lambda(5000, 5000, 2, 2.5) == 17
    assert derive_lambda(10**9, 1000, 2, 2.5) == 1


def test_derive_W_examples():
    assert derive_W(25, 10**6, 2, 2.5) == 666_667
    assert derive_W(1000, 1000) == 17
    # doubling the threshold halves the budget, up to rounding
    assert abs(derive_W(50, 10**6) - 666_667 / 2) <= 1


def test_proof_constant_is_larger():
    assert derive_W_proof(25, 10**6) == math.ceil(Decimal(4) * Decimal(5) ** 6 / Decimal("1.5") * 40000)
    assert derive_W_proof(25, 10**6) > derive_W(25, 10**6)


def test_stash_hint():
    assert stash_size_hint(0.01) == math.ceil(6 * 8 * 2.5**4 * math.log(100))
    with pytest.raises(ValueError):
        stash_size_hint(1.0)


@pytest.mark.parametrize("bad", [1, 0.5, 1.0])
def test_ratio_must_exceed_one(bad):
    with pytest.raises(ValueError):
        layer_width(100, bad, 1)
    with pytest.raises(ValueError):
        derive_W(25, 100, r_w=2, r_lambda=bad)


@given(st.integers(1, 10**9), st.sampled_from([1.5, 2, 2.5, 3, 4, 10]), st.integers(1, 12))
def test_width_matches_decimal_oracle(W, rw, i):
    assert layer_width(W, rw, i) == dec_width(W, rw, i)


@given(st.integers(0, 10**6), st.sampled_from([1.5, 2, 2.5, 3, 4]), st.integers(1, 12))
def test_threshold_matches_decimal_oracle(lam, rl, i):
    assert layer_threshold(lam, rl, i) == dec_threshold(lam, rl, i)


@given(st.integers(1, 10**6), st.integers(1, 10**8),
       st.sampled_from([1.5, 2, 2.5, 4]), st.sampled_from([1.5, 2, 2.5, 4]))
def test_derivations_match_decimal_oracle(a, n, rw, rl):
    c = dec_const(rw, rl)
    assert derive_W(a, n, rw, rl) == max(1, math.ceil(c * n / a))
    assert derive_lambda(a, n, rw, rl) == max(1, math.ceil(c * n / a))


@given(st.integers(1, 10**5), st.sampled_from([2, 2.5, 3]))
def test_thresholds_sum_below_cap(lam, rl):
    assert sum(layer_thresholds(lam, rl, 64)) <= lam
