"""Accuracy metrics and the interval-based applications.

The applications only ever look at certified ``[lower, upper]`` intervals,
so their guarantees (full recall, full precision, no severe false
positives) hold whenever the sketches are untainted and the values that
matter exceed the error threshold.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Union

import numpy as np

from .sketch import EstimateInterval, ReliableSketch

CSV_COLUMNS = ("algo", "memory_bytes", "lambda", "seed", "outliers", "aae", "are", "mops", "avg_layers")

Estimator = Union[Callable, Mapping]


@dataclass
class EvalReport:
    outliers: int
    aae: float
    are: float
    insert_throughput: float = 0.0   # million inserts per second
    avg_layers_visited: float = 0.0
    n_keys: int = 0
    max_abs_error: int = 0
    rows: Optional[list] = field(default=None, repr=False)


def _estimates(estimator: Estimator, keys: np.ndarray) -> np.ndarray:
    if hasattr(estimator, "query_many"):
        res = estimator.query_many(keys)
        return np.asarray(res[0] if isinstance(res, tuple) else res, dtype=np.int64)
    if isinstance(estimator, Mapping):
        return np.array([estimator.get(k, 0) for k in keys.tolist()], dtype=np.int64)
    out = []
    for k in keys.tolist():
        r = estimator(k)
        out.append(r.upper if isinstance(r, EstimateInterval) else r)
    return np.array(out, dtype=np.int64)


def error_metrics(true: np.ndarray, est: np.ndarray, lambda_cap: int) -> tuple[int, float, float, int]:
    """``(outliers, aae, are, max_abs_error)`` over aligned arrays."""
    true = np.asarray(true, dtype=np.int64)
    err = np.abs(np.asarray(est, dtype=np.int64) - true)
    if err.size == 0:
        return 0, 0.0, 0.0, 0
    pos = true >= 1
    are = float(np.mean(err[pos] / true[pos])) if pos.any() else 0.0
    return int(np.count_nonzero(err > lambda_cap)), float(err.mean()), are, int(err.max())


def evaluate(truth: Mapping[int, int], estimator: Estimator, lambda_cap: int, *,
             throughput: float = 0.0, avg_layers: float = 0.0, per_key: bool = False) -> EvalReport:
    """Score an estimator against exact counts.

    ``estimator`` may be a sketch (anything with ``query_many``), a mapping,
    or a callable returning a count or an :class:`EstimateInterval`.
    """
    if not truth:
        raise ValueError("truth is empty")
    keys = np.fromiter(truth.keys(), dtype=np.uint64, count=len(truth))
    true = np.fromiter(truth.values(), dtype=np.int64, count=len(truth))
    est = _estimates(estimator, keys)
    outliers, aae, are, worst = error_metrics(true, est, lambda_cap)
    rows = None
    if per_key:
        rows = list(zip(keys.tolist(), true.tolist(), est.tolist()))
    return EvalReport(outliers, aae, are, throughput, avg_layers, len(truth), worst, rows)


def write_per_key_csv(path, rows: Iterable[tuple[int, int, int]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("key", "true", "estimate"))
        w.writerows(rows)


# -- top-k -------------------------------------------------------------

Intervals = Mapping[int, tuple[int, int]]   # key -> (lower, upper)


def topk_no_miss_intervals(intervals: Intervals, k: int) -> set:
    """Every key whose upper bound reaches the k-th largest lower bound."""
    if k < 1 or k > len(intervals):
        raise ValueError(f"k={k} outside 1..{len(intervals)}")
    lowers = sorted((lo for lo, _ in intervals.values()), reverse=True)
    cut = lowers[k - 1]
    return {key for key, (_, up) in intervals.items() if up >= cut}


def topk_no_false_intervals(intervals: Intervals, k: int) -> set:
    """Keys whose lower bound reaches the k-th largest upper bound."""
    if k < 1 or k > len(intervals):
        raise ValueError(f"k={k} outside 1..{len(intervals)}")
    uppers = sorted((up for _, up in intervals.values()), reverse=True)
    cut = uppers[k - 1]
    return {key for key, (lo, _) in intervals.items() if lo >= cut}


def recorded_intervals(sketch: ReliableSketch, candidates: Optional[Iterable] = None) -> dict[int, tuple[int, int]]:
    """Intervals of all keys the sketch currently records as candidates."""
    if sketch.overflow_flag:
        raise ValueError("sketch is tainted by overflow; its intervals carry no guarantee")
    keys = sketch.recorded_keys(candidates)
    upper, lower, _ = sketch.query_many(keys)
    return dict(zip(keys.tolist(), zip(lower.tolist(), upper.tolist())))


def topk_no_miss(sketch: ReliableSketch, k: int, candidates: Optional[Iterable] = None) -> set:
    """Report containing every true top-k key (when the k-th value exceeds lambda)."""
    return topk_no_miss_intervals(recorded_intervals(sketch, candidates), k)


def topk_no_false(sketch: ReliableSketch, k: int, candidates: Optional[Iterable] = None) -> set:
    """Report holding only true top-k keys (when the k-th value exceeds lambda)."""
    return topk_no_false_intervals(recorded_intervals(sketch, candidates), k)


# -- heavy changes -----------------------------------------------------

def max_possible_change(a: tuple[int, int], b: tuple[int, int]) -> int:
    """Largest ``|f_a - f_b|`` consistent with intervals ``a`` and ``b`` (lower, upper)."""
    return max(b[1] - a[0], a[1] - b[0])


def min_possible_change(a: tuple[int, int], b: tuple[int, int]) -> int:
    """Smallest ``|f_a - f_b|`` consistent with the intervals; > 0 iff disjoint."""
    return max(0, b[0] - a[1], a[0] - b[1])


def heavy_changes(sketch_a: ReliableSketch, sketch_b: ReliableSketch, threshold: int,
                  candidates: Optional[Iterable] = None) -> set:
    """Keys whose value may have changed by at least ``threshold``.

    Every key whose true change is >= threshold is reported, and every
    reported key changed by at least ``threshold - lambda_a - lambda_b``.
    """
    if threshold < sketch_a.lambda_cap + sketch_b.lambda_cap:
        raise ValueError("threshold must be at least the sum of both error thresholds")
    if sketch_a.overflow_flag or sketch_b.overflow_flag:
        raise ValueError("sketch is tainted by overflow; its intervals carry no guarantee")
    if candidates is not None:
        candidates = np.unique(np.asarray(list(candidates) if not isinstance(candidates, np.ndarray) else candidates,
                                          dtype=np.uint64))
    keys = np.union1d(sketch_a.recorded_keys(candidates), sketch_b.recorded_keys(candidates))
    if keys.size == 0:
        return set()
    ua, la, _ = sketch_a.query_many(keys)
    ub, lb, _ = sketch_b.query_many(keys)
    change = np.maximum(ub - la, ua - lb)
    return set(keys[change >= threshold].tolist())
