import csv
import io
import json

import pytest

from reliablesketch.cli import (
    CSV_COLUMNS,
    RunSpec,
    UsageError,
    main,
    parse_size,
    recommended_memory,
    run_bench,
    run_sweep,
)
from reliablesketch.datasets import read_trace

ZIPF = ["--zipf-items", "100000", "--zipf-keys", "10000", "--zipf-skew", "1.0"]
GOLDEN_HEADER = "algo,memory_bytes,lambda,seed,outliers,aae,are,mops,avg_layers"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def strip_mops(rs):
    return [{k: v for k, v in r.items() if k != "mops"} for r in rs]


def test_parse_size():
    assert parse_size("1MB") == 10**6
    assert parse_size("64KiB") == 65536
    assert parse_size("1500") == 1500
    with pytest.raises(UsageError):
        parse_size("lots")


def test_gen_deterministic(tmp_path, capsys):
    a, b, c = tmp_path / "a.bin", tmp_path / "b.bin", tmp_path / "c.txt"
    for p in (a, b):
        assert run(capsys, "gen", "--items", "20000", "--keys", "2000", "--skew", "1.0", "--seed", "7", "--out", str(p))[0] == 0
    assert a.read_bytes() == b.read_bytes()
    assert run(capsys, "gen", "--items", "500", "--keys", "50", "--skew", "0", "--out", str(c))[0] == 0
    assert len(read_trace(c)) == 500


def test_bench_schema_and_determinism(capsys):
    code, out, _ = run(capsys, "bench", "--algo", "reliable", "--memory", "200KB", "--lambda", "25", *ZIPF)
    assert code == 0
    assert out.splitlines()[0] == GOLDEN_HEADER
    assert tuple(out.splitlines()[0].split(",")) == CSV_COLUMNS
    r1 = rows(out)
    assert len(r1) == 1 and r1[0]["outliers"] == "0"
    r2 = rows(run(capsys, "bench", "--algo", "reliable", "--memory", "200KB", "--lambda", "25", *ZIPF)[1])
    assert strip_mops(r1) == strip_mops(r2)


def test_bench_all_algos(capsys):
    for algo in ("reliable", "reliable_raw", "cm_fast", "cm_acc", "cu_fast", "cu_acc", "ss"):
        code, out, _ = run(capsys, "bench", "--algo", algo, "--memory", "100KB", "--lambda", "25", *ZIPF)
        assert code == 0, algo
        assert rows(out)[0]["algo"] == algo


def test_bench_derives_lambda(capsys):
    code, out, _ = run(capsys, "bench", "--memory", "100KB", *ZIPF)
    assert code == 0
    assert int(rows(out)[0]["lambda"]) > 0


def test_bench_recommended_memory(capsys):
    code, out, _ = run(capsys, "bench", "--memory", "recommended", "--lambda", "25", *ZIPF)
    assert code == 0
    r = rows(out)[0]
    assert int(r["memory_bytes"]) == recommended_memory(25, 100_000)
    assert r["outliers"] == "0"


def test_bench_report_appends(tmp_path, capsys):
    rep = tmp_path / "r.csv"
    for _ in range(2):
        run(capsys, "bench", "--algo", "cm_fast", "--memory", "50KB", "--lambda", "25", *ZIPF, "--report", str(rep))
    lines = rep.read_text().splitlines()
    assert lines[0] == GOLDEN_HEADER and len(lines) == 3


def test_bench_overflow_exit(capsys):
    code, _, err = run(capsys, "bench", "--algo", "reliable_raw", "--memory", "2KB", "--lambda", "25",
                       "--stash", "0", *ZIPF)
    assert code == 2
    assert "overflow" in err


@pytest.mark.parametrize("argv", [
    ["bench", "--memory", "0", *ZIPF],
    ["bench", "--memory", "100KB"],
    ["bench", "--memory", "100KB", "--zipf-items", "10"],
    ["bench", "--memory", "100KB", "--trace", "x.bin", *ZIPF],
    ["bench", "--memory", "recommended", *ZIPF],
    ["bench", "--memory", "100KB", "--trace", "/nonexistent/trace.bin"],
    ["bench", "--algo", "nope", "--memory", "1MB", *ZIPF],
    ["bench", "--memory", "1MB", "--lambda", "5000", *ZIPF],
    ["sweep", "--r-w", "", *ZIPF],
    ["sweep", "--memory", ",", *ZIPF],
])
def test_config_errors_exit_1(capsys, argv):
    with pytest.raises(SystemExit) as e:
        raise SystemExit(main(argv))
    assert e.value.code == 1


def test_one_cell_sweep_equals_bench(capsys):
    bench = rows(run(capsys, "bench", "--memory", "150KB", "--lambda", "25", "--seed", "3", *ZIPF)[1])
    sweep = rows(run(capsys, "sweep", "--memory", "150KB", "--lambda", "25", "--seed", "3", *ZIPF)[1])
    assert len(sweep) == 1
    assert sweep[0].pop("r_w") == "2.0" and sweep[0].pop("r_lambda") == "2.5"
    assert strip_mops(sweep) == strip_mops(bench)


def test_sweep_grid(capsys, monkeypatch):
    monkeypatch.setenv("RSKETCH_THREADS", "2")
    code, out, _ = run(capsys, "sweep", "--memory", "80KB,160KB", "--lambda", "25,50", "--r-w", "2,3", *ZIPF)
    assert code == 0
    assert len(rows(out)) == 8


def test_snapshot_restore_query(tmp_path, capsys):
    snap = tmp_path / "s.rsk"
    assert run(capsys, "snapshot", "--memory", "100KB", "--lambda", "25", *ZIPF, "--out", str(snap))[0] == 0
    code, out, _ = run(capsys, "restore", str(snap))
    assert code == 0
    summary = json.loads(out)
    assert summary["thresholds"] == [15, 6, 2]
    assert not summary["overflow"]
    code, out, _ = run(capsys, "query", str(snap), "1", "2")
    assert code == 0
    q = rows(out)
    assert [r["key"] for r in q] == ["1", "2"]
    assert all(int(r["lower"]) <= int(r["upper"]) for r in q)
    snap.write_bytes(b"JUNK" + snap.read_bytes()[4:])
    assert run(capsys, "query", str(snap), "1")[0] == 1


def test_runspec_validation():
    with pytest.raises(UsageError):
        RunSpec("reliable", 1000)
    with pytest.raises(UsageError):
        RunSpec("reliable", 1000, trace_path="a", zipf_items=5, zipf_keys=5, zipf_skew=1)
    row, ovf = run_bench(RunSpec("ss", 50_000, lambda_cap=25, zipf_items=5000, zipf_keys=500, zipf_skew=1.0))
    assert row["algo"] == "ss" and not ovf


RW_GRID = [1.5, 2.0, 2.5, 4.0]


def min_memory_by_rw(seed):
    base = RunSpec("reliable", 1 << 20, lambda_cap=25, seed=seed,
                   zipf_items=200_000, zipf_keys=20_000, zipf_skew=1.0)
    out, _ = run_sweep(base, RW_GRID, [2.5], [25], [1 << 20], find_min=True,
                       memory_lo=4096, memory_hi=16 << 20, workers=1)
    assert all(r["outliers"] == 0 for r in out)
    return {r["r_w"]: r["memory_bytes"] for r in out}


@pytest.fixture(scope="module")
def rw_sweep():
    """Mean minimum zero-outlier memory per R_w over three seeds."""
    per_seed = [min_memory_by_rw(seed) for seed in range(3)]
    return {rw: sum(d[rw] for d in per_seed) / len(per_seed) for rw in RW_GRID}


def test_rw_too_small_costs_memory(rw_sweep):
    best = min(rw_sweep[2.0], rw_sweep[2.5])
    assert rw_sweep[1.5] > 1.15 * best
    assert rw_sweep[2.5] <= rw_sweep[2.0]


@pytest.mark.xfail(strict=True, reason="on synthetic Zipf with a 64-entry stash the curve is flat for R_w >= 2.5 "
                                       "and R_w=4 edges out 2.5 by a few percent; see the decisions ledger")
def test_rw_sweep_argmin_in_two_to_two_and_half(rw_sweep):
    assert min(rw_sweep, key=rw_sweep.get) in (2.0, 2.5)
