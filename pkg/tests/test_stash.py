import random

import pytest
from hypothesis import given, strategies as st

from reliablesketch.stash import SpaceSavingStash, StashEntry, stash_insert, stash_query

A, B, C = 1, 2, 3


def test_fits_then_replaces_min():
    s = SpaceSavingStash(2)
    stash_insert(s, A)
    stash_insert(s, B)
    assert list(s.entries()) == [StashEntry(A, 1, 0), StashEntry(B, 1, 0)]
    stash_insert(s, C)
    assert sorted(s.entries(), key=lambda e: -e.count) == [StashEntry(C, 2, 1), StashEntry(B, 1, 0)]
    assert stash_query(s, C) == (2, 1)
    assert A not in s


def test_absent_key_bounds():
    s = SpaceSavingStash(3)
    assert s.query(99) == (0, 0)
    s.insert(A, 3)
    assert s.query(99) == (0, 0)
    for k, v in ((B, 5), (C, 7)):
        s.insert(k, v)
    assert s.min_count() == 3
    s.insert(4, 2)               # evicts A: count 3 + 2
    assert s.min_count() == 5
    assert s.query(A) == (5, 5)


def test_rejects_zero_and_bad_entries():
    with pytest.raises(ValueError):
        SpaceSavingStash(2).insert(A, 0)
    with pytest.raises(ValueError):
        SpaceSavingStash.from_entries(1, [(1, 2, 0), (2, 1, 0)])
    with pytest.raises(ValueError):
        SpaceSavingStash.from_entries(2, [(1, 2, 3)])


def test_round_trip_entries():
    s = SpaceSavingStash(4)
    rng = random.Random(5)
    for _ in range(500):
        s.insert(rng.randrange(20), rng.randint(1, 9))
    t = SpaceSavingStash.from_entries(4, [tuple(e) for e in s.entries()])
    for k in range(25):
        assert t.query(k) == s.query(k)
    t.insert(3, 4)
    s.insert(3, 4)
    assert sorted(t.entries()) == sorted(s.entries())


@given(st.integers(1, 8), st.lists(st.tuples(st.integers(0, 15), st.integers(1, 30)), max_size=200))
def test_soundness_and_conservation(cap, items):
    s = SpaceSavingStash(cap)
    f = {}
    for k, v in items:
        s.insert(k, v)
        f[k] = f.get(k, 0) + v
    assert sum(e.count for e in s.entries()) == sum(f.values())
    for k in range(20):
        est, err = s.query(k)
        assert est - err <= f.get(k, 0) <= est
