"""Benchmark harness: ``rsketch gen | bench | sweep | snapshot | restore | query``.

Exit codes: 0 success, 1 configuration or usage error, 2 the sketch
overflowed during ``bench`` (its guarantees no longer hold).
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .analytics import CSV_COLUMNS, error_metrics
from .baselines import ACCURATE_ROWS, FAST_ROWS, CounterMatrix
from .datasets import Trace, exact_counts, gen_zipf, read_trace, save_trace
from .params import derive_lambda, derive_W
from .sketch import ReliableSketch, SketchConfig
from .stash import SpaceSavingStash

ALGOS = ("reliable", "reliable_raw", "cm_fast", "cm_acc", "cu_fast", "cu_acc", "ss")
SS_ENTRY_BYTES = 12
DEFAULT_FILTER_FRACTION = 0.2
EXIT_OK, EXIT_CONFIG, EXIT_OVERFLOW = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunSpec:
    algo: str
    memory_bytes: int
    lambda_cap: Optional[int] = None
    r_w: float = 2.0
    r_lambda: float = 2.5
    depth: int = 7
    seed: int = 0
    stash_capacity: int = 64
    trace_path: Optional[str] = None
    trace_format: Optional[str] = None
    zipf_items: Optional[int] = None
    zipf_keys: Optional[int] = None
    zipf_skew: Optional[float] = None
    trace_seed: Optional[int] = None
    max_value: int = 1
    report_path: Optional[str] = None

    def __post_init__(self):
        if self.algo not in ALGOS:
            raise UsageError(f"unknown algo {self.algo!r}; choose from {', '.join(ALGOS)}")
        if self.memory_bytes is None or self.memory_bytes <= 0:
            raise UsageError("memory_bytes must be positive")
        has_file = self.trace_path is not None
        has_zipf = any(v is not None for v in (self.zipf_items, self.zipf_keys, self.zipf_skew))
        if has_file == has_zipf:
            raise UsageError("give exactly one trace source: --trace or the --zipf-* parameters")
        if has_zipf and None in (self.zipf_items, self.zipf_keys, self.zipf_skew):
            raise UsageError("--zipf-items, --zipf-keys and --zipf-skew go together")

    def load_trace(self) -> Trace:
        if self.trace_path is not None:
            return read_trace(self.trace_path, self.trace_format)
        seed = self.seed if self.trace_seed is None else self.trace_seed
        return gen_zipf(self.zipf_items, self.zipf_keys, self.zipf_skew, seed, self.max_value)


_SIZE = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*([kmg]?i?b?)?\s*$", re.I)
_UNITS = {"": 1, "b": 1, "kb": 1000, "k": 1000, "mb": 10**6, "m": 10**6, "gb": 10**9, "g": 10**9,
          "kib": 1024, "mib": 1024**2, "gib": 1024**3}


def parse_size(text: str) -> int:
    """``"1MB"`` -> 1000000, ``"64KiB"`` -> 65536, ``"1234"`` -> 1234."""
    m = _SIZE.match(str(text))
    if not m or (m.group(2) or "").lower() not in _UNITS:
        raise UsageError(f"cannot parse size {text!r}")
    return int(float(m.group(1)) * _UNITS[(m.group(2) or "").lower()])


def recommended_memory(lambda_cap: int, n_items: int, r_w=2.0, r_lambda=2.5, stash_capacity=64) -> int:
    """Bytes giving the recommended bucket count (plus the stash) at default field widths."""
    probe = SketchConfig(total_buckets=1, lambda_cap=1, stash_capacity=stash_capacity)
    w = derive_W(lambda_cap, n_items, r_w, r_lambda)
    return int(w * probe.bucket_bytes + stash_capacity * probe.stash_entry_bytes)


def sketch_config(spec: RunSpec, n_total: int, raw: bool) -> SketchConfig:
    return SketchConfig(
        memory_bytes=spec.memory_bytes, lambda_cap=spec.lambda_cap, n_hint=n_total,
        r_w=spec.r_w, r_lambda=spec.r_lambda, depth=spec.depth, seed=spec.seed,
        stash_capacity=spec.stash_capacity,
        mice_filter_fraction=0.0 if raw else DEFAULT_FILTER_FRACTION,
    )


def build(spec: RunSpec, n_total: int):
    """Instantiate the algorithm named in ``spec``; returns ``(algo, lambda_cap)``."""
    if spec.algo in ("reliable", "reliable_raw"):
        sk = ReliableSketch(sketch_config(spec, n_total, spec.algo == "reliable_raw"))
        return sk, sk.lambda_cap
    lam = spec.lambda_cap
    if lam is None:
        probe = SketchConfig(total_buckets=1, lambda_cap=1)
        lam = derive_lambda(max(1, int(spec.memory_bytes // probe.bucket_bytes)), max(1, n_total), spec.r_w, spec.r_lambda)
    if spec.algo == "ss":
        cap = spec.memory_bytes // SS_ENTRY_BYTES
        if cap < 1:
            raise ValueError(f"{spec.memory_bytes} bytes cannot hold a SpaceSaving entry")
        return SpaceSavingStash(cap), lam
    rows = FAST_ROWS if spec.algo.endswith("fast") else ACCURATE_ROWS
    return CounterMatrix.for_memory(spec.memory_bytes, rows, spec.seed, conservative=spec.algo.startswith("cu")), lam


def _warm_up(spec: RunSpec) -> None:
    # compile kernels outside the timed region
    tiny = replace(spec, memory_bytes=max(spec.memory_bytes, 4096), lambda_cap=spec.lambda_cap or 25)
    algo, _ = build(tiny, 100)
    keys = np.arange(1, 9, dtype=np.uint64)
    algo.insert_many(keys, np.ones(8, dtype=np.int64))
    algo.query_many(keys)


def run_bench(spec: RunSpec, trace: Optional[Trace] = None) -> tuple[dict, bool]:
    """Run one benchmark cell; returns the CSV row and the overflow flag."""
    if trace is None:
        trace = spec.load_trace()
    if len(trace) == 0:
        raise UsageError("trace is empty")
    algo, lam = build(spec, trace.total)
    _warm_up(spec)
    values = None if trace.unit else trace.values
    t0 = time.perf_counter()
    algo.insert_many(trace.keys, values)
    elapsed = time.perf_counter() - t0
    keys, true = exact_counts(trace.keys, trace.values)
    est = algo.query_many(keys)
    if isinstance(est, tuple):
        est = est[0]
    outliers, aae, are, _ = error_metrics(true, est, lam)
    if isinstance(algo, ReliableSketch):
        layers, overflow = algo.stats.layers_per_insert, algo.overflow_flag
    elif isinstance(algo, CounterMatrix):
        layers, overflow = float(algo.rows), False
    else:
        layers, overflow = 1.0, False
    row = {
        "algo": spec.algo,
        "memory_bytes": spec.memory_bytes,
        "lambda": lam,
        "seed": spec.seed,
        "outliers": outliers,
        "aae": f"{aae:.6f}",
        "are": f"{are:.6f}",
        "mops": f"{len(trace) / elapsed / 1e6 if elapsed > 0 else 0.0:.3f}",
        "avg_layers": f"{layers:.4f}",
    }
    return row, overflow


def write_rows(rows: Sequence[dict], out=None, report_path: Optional[str] = None) -> None:
    out = out or sys.stdout
    w = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if report_path:
        path = Path(report_path)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="") as fh:
            fw = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            if new:
                fw.writeheader()
            fw.writerows(rows)


# -- sweep -------------------------------------------------------------

_WORKER_TRACE: Optional[Trace] = None


def _worker_init(spec: RunSpec) -> None:
    global _WORKER_TRACE
    _WORKER_TRACE = spec.load_trace()


def _cell(args):
    spec, find_min, lo, hi = args
    trace = _WORKER_TRACE if _WORKER_TRACE is not None else spec.load_trace()
    if find_min:
        return min_zero_outlier_memory(spec, trace, lo, hi)
    return run_bench(spec, trace)


def min_zero_outlier_memory(spec: RunSpec, trace: Trace, lo: int, hi: int, rel_tol: float = 0.02) -> tuple[dict, bool]:
    """Smallest memory (within ``rel_tol``) at which the run reports zero outliers.

    Doubles from ``lo`` until a zero-outlier run is found (or ``hi`` is
    passed), then bisects. Rows failing to reach zero report ``hi``.
    """
    def attempt(mem):
        try:
            row, ovf = run_bench(replace(spec, memory_bytes=int(mem)), trace)
        except ValueError:
            return None, False
        return row, ovf

    good = None
    mem = lo
    bad = 0
    while mem <= hi:
        row, ovf = attempt(mem)
        if row is not None and row["outliers"] == 0 and not ovf:
            good = (mem, row, ovf)
            break
        bad = mem
        mem *= 2
    if good is None:
        row, ovf = attempt(hi)
        if row is None:
            raise ValueError(f"memory {hi} is not a valid configuration")
        return row, ovf
    top, row, ovf = good
    while top - bad > max(1, rel_tol * top):
        mid = (top + bad) // 2
        r, o = attempt(mid)
        if r is not None and r["outliers"] == 0 and not o:
            top, row, ovf = mid, r, o
        else:
            bad = mid
    return row, ovf


def run_sweep(base: RunSpec, r_ws, r_lambdas, lambdas, memories, *, find_min=False,
              memory_lo=1 << 14, memory_hi=1 << 28, workers: Optional[int] = None) -> tuple[list[dict], bool]:
    grid = list(itertools.product(r_ws, r_lambdas, lambdas, memories))
    if not grid:
        raise UsageError("empty parameter grid")
    cells = [(replace(base, r_w=rw, r_lambda=rl, lambda_cap=lam, memory_bytes=mem), find_min, memory_lo, memory_hi)
             for rw, rl, lam, mem in grid]
    if workers is None:
        workers = int(os.environ.get("RSKETCH_THREADS", os.cpu_count() or 1))
    workers = max(1, min(workers, len(cells)))
    if workers == 1:
        global _WORKER_TRACE
        _WORKER_TRACE = base.load_trace()
        try:
            results = [_cell(c) for c in cells]
        finally:
            _WORKER_TRACE = None
    else:
        with ProcessPoolExecutor(workers, initializer=_worker_init, initargs=(base,)) as ex:
            results = list(ex.map(_cell, cells))
    rows = []
    overflow = False
    for (spec, *_), (row, ovf) in zip(cells, results):
        row = dict(row, r_w=spec.r_w, r_lambda=spec.r_lambda)
        rows.append(row)
        overflow |= ovf
    return rows, overflow


# -- argument parsing --------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text: str) -> list[Optional[int]]:
    return [None if x.strip() == "auto" else int(x) for x in text.split(",") if x.strip()]


def _add_trace_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("trace source (one of)")
    g.add_argument("--trace", help="trace file (text or binary)")
    g.add_argument("--format", choices=("bin", "text"), help="trace format (default: by suffix)")
    g.add_argument("--zipf-items", type=int)
    g.add_argument("--zipf-keys", type=int)
    g.add_argument("--zipf-skew", type=float)
    g.add_argument("--trace-seed", type=int, help="seed for the synthetic trace (default: --seed)")
    g.add_argument("--max-value", type=int, default=1, help="synthetic item weights in [1, max-value]")


def _add_sketch_args(p: argparse.ArgumentParser, memory_required=True) -> None:
    p.add_argument("--memory", required=memory_required,
                   help="memory budget in bytes (suffixes KB/MB/KiB...), or 'recommended' (needs --lambda)")
    p.add_argument("--lambda", dest="lambda_cap", type=int, help="error threshold (default: derived)")
    p.add_argument("--r-w", type=float, default=2.0)
    p.add_argument("--r-lambda", type=float, default=2.5)
    p.add_argument("--depth", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stash", type=int, default=64, help="emergency stash entries (0 disables)")


def make_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rsketch", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="write a synthetic Zipf trace")
    g.add_argument("--items", type=int, required=True)
    g.add_argument("--keys", type=int, required=True)
    g.add_argument("--skew", type=float, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--max-value", type=int, default=1)
    g.add_argument("--out", required=True)
    g.add_argument("--format", choices=("bin", "text"))

    b = sub.add_parser("bench", help="run one algorithm on one trace, print a CSV row")
    b.add_argument("--algo", choices=ALGOS, default="reliable")
    _add_sketch_args(b)
    _add_trace_args(b)
    b.add_argument("--report", help="append the row to this CSV file")

    s = sub.add_parser("sweep", help="benchmark a parameter grid")
    s.add_argument("--algo", choices=ALGOS, default="reliable")
    s.add_argument("--memory", default="1MB", help="comma-separated memory sizes")
    s.add_argument("--lambda", dest="lambdas", default="auto", help="comma-separated thresholds or 'auto'")
    s.add_argument("--r-w", default="2", help="comma-separated R_w values")
    s.add_argument("--r-lambda", default="2.5", help="comma-separated R_lambda values")
    s.add_argument("--depth", type=int, default=7)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stash", type=int, default=64)
    s.add_argument("--find-min-memory", action="store_true",
                   help="search the smallest memory with zero outliers for each cell")
    s.add_argument("--memory-lo", default="16KB")
    s.add_argument("--memory-hi", default="256MB")
    _add_trace_args(s)
    s.add_argument("--report", help="append rows to this CSV file")

    sn = sub.add_parser("snapshot", help="build a ReliableSketch from a trace and save it")
    sn.add_argument("--raw", action="store_true", help="disable the mice filter")
    _add_sketch_args(sn)
    _add_trace_args(sn)
    sn.add_argument("--out", required=True)

    r = sub.add_parser("restore", help="load a snapshot and print its summary")
    r.add_argument("path")

    q = sub.add_parser("query", help="print the certified interval of keys in a snapshot")
    q.add_argument("path")
    q.add_argument("keys", nargs="+", type=int)
    return ap


def _memory(args, n_items_hint: Optional[int]) -> int:
    if str(args.memory).strip().lower() == "recommended":
        if args.lambda_cap is None or n_items_hint is None:
            raise UsageError("--memory recommended needs --lambda and a known trace size")
        return recommended_memory(args.lambda_cap, n_items_hint, args.r_w, args.r_lambda, args.stash)
    return parse_size(args.memory)


def _spec_from_args(args, memory: int, algo: str, **over) -> RunSpec:
    fields = dict(
        algo=algo, memory_bytes=memory, lambda_cap=getattr(args, "lambda_cap", None),
        r_w=getattr(args, "r_w", 2.0), r_lambda=getattr(args, "r_lambda", 2.5),
        depth=args.depth, seed=args.seed, stash_capacity=args.stash,
        trace_path=args.trace, trace_format=args.format,
        zipf_items=args.zipf_items, zipf_keys=args.zipf_keys, zipf_skew=args.zipf_skew,
        trace_seed=args.trace_seed, max_value=args.max_value,
        report_path=getattr(args, "report", None),
    )
    fields.update(over)
    return RunSpec(**fields)


def _trace_size_hint(args) -> Optional[int]:
    if args.zipf_items is not None:
        return args.zipf_items * (args.max_value + 1) // 2 if args.max_value > 1 else args.zipf_items
    return None


def cmd_gen(args) -> int:
    trace = gen_zipf(args.items, args.keys, args.skew, args.seed, args.max_value)
    save_trace(args.out, trace, args.format)
    print(f"wrote {len(trace)} records ({trace.total} total value) to {args.out}", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args) -> int:
    trace = None
    hint = _trace_size_hint(args)
    if str(args.memory).lower() == "recommended" and hint is None and args.trace:
        trace = read_trace(args.trace, args.format)
        hint = trace.total
    spec = _spec_from_args(args, _memory(args, hint), args.algo)
    row, overflow = run_bench(spec, trace)
    write_rows([row], report_path=spec.report_path)
    if overflow:
        print("overflow: some value did not fit in any layer; guarantees are void", file=sys.stderr)
        return EXIT_OVERFLOW
    return EXIT_OK


def cmd_sweep(args) -> int:
    memories = [parse_size(m) for m in args.memory.split(",") if m.strip()]
    r_ws = _float_list(args.r_w)
    r_ls = _float_list(args.r_lambda)
    lambdas = _int_list(args.lambdas)
    if not (memories and r_ws and r_ls and lambdas):
        raise UsageError("empty parameter grid")
    args.lambda_cap = None
    base = _spec_from_args(args, memories[0], args.algo, r_w=r_ws[0], r_lambda=r_ls[0])
    rows, overflow = run_sweep(base, r_ws, r_ls, lambdas, memories, find_min=args.find_min_memory,
                               memory_lo=parse_size(args.memory_lo), memory_hi=parse_size(args.memory_hi))
    out = io.StringIO()
    cols = CSV_COLUMNS + ("r_w", "r_lambda")
    w = csv.DictWriter(out, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    sys.stdout.write(out.getvalue())
    if args.report:
        path = Path(args.report)
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="") as fh:
            fw = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            if new:
                fw.writeheader()
            fw.writerows(rows)
    return EXIT_OVERFLOW if overflow else EXIT_OK


def cmd_snapshot(args) -> int:
    spec = _spec_from_args(args, 1, "reliable_raw" if args.raw else "reliable")
    trace = spec.load_trace()
    spec = replace(spec, memory_bytes=_memory(args, trace.total))
    sk = ReliableSketch(sketch_config(spec, trace.total, args.raw))
    sk.insert_many(trace.keys, None if trace.unit else trace.values)
    Path(args.out).write_bytes(sk.snapshot())
    print(f"wrote snapshot ({sk.layout.memory_bytes} nominal bytes, lambda {sk.lambda_cap}) to {args.out}",
          file=sys.stderr)
    return EXIT_OVERFLOW if sk.overflow_flag else EXIT_OK


def _load_snapshot(path) -> ReliableSketch:
    return ReliableSketch.restore(Path(path).read_bytes())


def cmd_restore(args) -> int:
    sk = _load_snapshot(args.path)
    lay = sk.layout
    summary = {
        "config": {k: v for k, v in sk.config.__dict__.items()},
        "lambda_cap": lay.lambda_cap,
        "thresholds": list(lay.thresholds),
        "bucket_widths": list(lay.bucket_widths),
        "filter_width": lay.filter_width,
        "occupancy": sk.occupancy(),
        "stash_entries": len(sk.stash) if sk.stash is not None else 0,
        "overflow": sk.overflow_flag,
        "nominal_bytes": lay.memory_bytes,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_query(args) -> int:
    sk = _load_snapshot(args.path)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("key", "upper", "lower", "mpe", "stash_consulted", "overflow_tainted"))
    for k in args.keys:
        iv = sk.query(k)
        w.writerow((k, iv.upper, iv.lower, iv.mpe, int(iv.stash_consulted), int(iv.overflow_tainted)))
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "bench": cmd_bench, "sweep": cmd_sweep,
            "snapshot": cmd_snapshot, "restore": cmd_restore, "query": cmd_query}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return COMMANDS[args.cmd](args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"rsketch {args.cmd}: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
