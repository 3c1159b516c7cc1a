import numpy as np
import pytest

from reliablesketch.analytics import (
    error_metrics,
    evaluate,
    heavy_changes,
    max_possible_change,
    min_possible_change,
    topk_no_false,
    topk_no_false_intervals,
    topk_no_miss,
    topk_no_miss_intervals,
    write_per_key_csv,
)
from reliablesketch.datasets import exact_counts, exact_oracle, gen_zipf
from reliablesketch.sketch import EstimateInterval, ReliableSketch, SketchConfig

A, B, C = 1, 2, 3


def test_evaluate_examples():
    truth = {A: 10, B: 3}
    r = evaluate(truth, truth, 25)
    assert (r.outliers, r.aae, r.are) == (0, 0.0, 0.0)
    r = evaluate({A: 10}, {A: 40}, 25)
    assert (r.outliers, r.aae, r.are) == (1, 30.0, 3.0)
    r = evaluate({A: 10, B: 10}, {A: 15, B: 5}, 25)
    assert (r.outliers, r.aae, r.are) == (0, 5.0, 0.5)


def test_evaluate_accepts_callables(tmp_path):
    r = evaluate({A: 10}, lambda k: EstimateInterval(12, 8, 4), 1, per_key=True)
    assert (r.outliers, r.aae, r.max_abs_error) == (1, 2.0, 2)
    write_per_key_csv(tmp_path / "k.csv", r.rows)
    assert (tmp_path / "k.csv").read_text().splitlines() == ["key,true,estimate", "1,10,12"]
    with pytest.raises(ValueError):
        evaluate({}, {}, 1)


def test_error_metrics_skips_zero_truth_in_are():
    assert error_metrics(np.array([0, 4]), np.array([2, 6]), 1) == (2, 2.0, 0.5, 2)


def test_topk_interval_rules():
    iv = {A: (90, 100), B: (50, 60), C: (10, 40)}
    assert topk_no_miss_intervals(iv, 2) == {A, B}
    iv = {A: (90, 100), B: (50, 60), C: (30, 40)}
    assert topk_no_false_intervals(iv, 2) == {A}
    exact = {A: (9, 9), B: (5, 5), C: (1, 1)}
    assert topk_no_miss_intervals(exact, 1) == {A}
    assert topk_no_false_intervals(exact, 2) == {A, B}
    with pytest.raises(ValueError):
        topk_no_miss_intervals(exact, 4)


def true_topk(truth, k):
    return {key for key, _ in sorted(truth.items(), key=lambda kv: -kv[1])[:k]}


@pytest.mark.parametrize("seed,skew", [(0, 1.0), (1, 1.3), (2, 0.8), (3, 1.6)])
def test_topk_fuzz(seed, skew):
    tr = gen_zipf(200_000, 20_000, skew, seed=seed)
    sk = ReliableSketch(SketchConfig.recommended(25, len(tr), id_bits=64, seed=seed))
    sk.insert_many(tr.keys)
    truth = exact_oracle(tr)
    k = 50
    kth = sorted(truth.values(), reverse=True)[k - 1]
    assert kth > sk.lambda_cap
    top = true_topk(truth, k)
    assert top <= topk_no_miss(sk, k)
    assert topk_no_false(sk, k) <= top


def test_topk_refuses_tainted():
    sk = ReliableSketch(SketchConfig(total_buckets=100, lambda_cap=25, id_bits=64))
    sk.insert(A, 5)
    sk.overflow_flag = True
    with pytest.raises(ValueError):
        topk_no_miss(sk, 1)


def test_change_bounds():
    assert max_possible_change((0, 0), (975, 1000)) == 1000
    assert min_possible_change((0, 0), (975, 1000)) == 975
    assert min_possible_change((5, 10), (8, 12)) == 0


def two_sketches(**kw):
    cfg = SketchConfig(total_buckets=2000, lambda_cap=25, id_bits=64, **kw)
    return ReliableSketch(cfg), ReliableSketch(cfg)


def test_heavy_change_examples():
    sa, sb = two_sketches()
    tr = gen_zipf(5000, 500, 1.0, seed=1)
    sa.insert_many(tr.keys)
    sb.insert_many(tr.keys)
    assert heavy_changes(sa, sb, 50) == set()
    sa, sb = two_sketches()
    sb.insert(A, 1000)
    assert heavy_changes(sa, sb, 100) == {A}
    with pytest.raises(ValueError):
        heavy_changes(sa, sb, 49)


@pytest.mark.parametrize("seed", range(4))
def test_heavy_change_fuzz(seed):
    rng = np.random.default_rng(seed)
    base = gen_zipf(150_000, 10_000, 1.1, seed=seed)
    keep = rng.random(len(base)) < 0.9
    a_keys = base.keys
    b_keys = np.concatenate([base.keys[keep], gen_zipf(20_000, 2_000, 1.5, seed=seed + 100).keys])
    cfg = SketchConfig.recommended(25, 200_000, id_bits=64, seed=seed)
    sa, sb = ReliableSketch(cfg), ReliableSketch(cfg)
    sa.insert_many(a_keys)
    sb.insert_many(b_keys)
    ka, fa = exact_counts(a_keys)
    kb, fb = exact_counts(b_keys)
    ta, tb = dict(zip(ka.tolist(), fa.tolist())), dict(zip(kb.tolist(), fb.tolist()))
    T = 100
    change = {k: abs(ta.get(k, 0) - tb.get(k, 0)) for k in set(ta) | set(tb)}
    rep = heavy_changes(sa, sb, T)
    assert {k for k, c in change.items() if c >= T} <= rep
    assert all(change[k] >= T - 2 * 25 for k in rep)
