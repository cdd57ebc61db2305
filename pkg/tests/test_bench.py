import csv
import json

import pytest

from pyOSEP.bench import (
    CSV_COLUMNS,
    BenchRecord,
    complexity_exponents,
    fit_exponent,
    format_table,
    read_report,
    run_benchmark,
    summarize,
    write_report,
)
from pyOSEP.bench.harness import bench_keypair
from pyOSEP.config import ProtocolConfig

SMALL = ProtocolConfig(key_bits=256, guard_bits=16, mask_bits=64)


def record(n=4, trial=0, t_original=2.0, t_cloud=3.0, t_client=1.0, iterations=10, valid=True):
    return BenchRecord(n=n, trial=trial, t_original=t_original, t_cloud=t_cloud,
                       t_client=t_client, iterations=iterations, seed=n + trial,
                       setup_s=0.25, verify_s=0.25, valid=valid)


def test_record_speedups():
    r = record()
    assert r.speedup_paper == 2.0
    assert r.speedup_total == 0.5
    assert r.client_round_s == pytest.approx(0.05)
    assert r.cloud_round_s == pytest.approx(0.3)
    assert record(t_client=0.0, t_cloud=0.0).speedup_paper == float("inf")


def test_smoke_run():
    records = run_benchmark([4], trials=2, config=SMALL, seed=1, warmup=False)
    assert [(r.n, r.trial) for r in records] == [(4, 0), (4, 1)]
    assert all(r.valid for r in records)
    assert all(r.iterations > 0 for r in records)
    assert all(r.t_client > 0 and r.t_cloud > 0 and r.t_original > 0 for r in records)
    assert records[0].seed == 1 + 4000


def test_float_baseline():
    records = run_benchmark([3], trials=1, config=SMALL, baseline="float")
    assert records[0].valid


def test_bad_arguments():
    with pytest.raises(ValueError):
        run_benchmark([], config=SMALL)
    with pytest.raises(ValueError):
        run_benchmark([4], trials=0, config=SMALL)
    with pytest.raises(ValueError):
        run_benchmark([4], config=SMALL, baseline="gpu")


def test_empty_report_is_header_only(tmp_path):
    path = write_report([], tmp_path / "report.csv", SMALL)
    assert path.read_text().splitlines() == [",".join(CSV_COLUMNS)]
    assert read_report(path) == []


def test_csv_header_starts_with_the_published_columns(tmp_path):
    path = write_report([record()], tmp_path / "report.csv", SMALL)
    header = path.read_text().splitlines()[0].split(",")
    assert header[:9] == ["n", "trial", "t_original", "t_cloud", "t_client",
                          "speedup_paper", "speedup_total", "iterations", "seed"]
    with open(path, newline="") as f:
        (row,) = csv.DictReader(f)
    assert float(row["speedup_paper"]) == 2.0
    assert float(row["speedup_total"]) == 0.5


def test_one_record_roundtrip(tmp_path):
    original = record(t_original=0.1 + 0.2)
    path = write_report([original], tmp_path / "report.csv", SMALL)
    assert len(path.read_text().splitlines()) == 2
    assert read_report(path) == [original]


def test_report_rows_and_sidecar(tmp_path):
    records = [record(n=n, trial=t) for n in (4, 8, 16) for t in range(5)]
    path = write_report(records, tmp_path / "out" / "report.csv", SMALL, extra={"note": "x"})
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 15
    assert list(rows[0]) == CSV_COLUMNS
    sidecar = json.loads(path.with_suffix(".json").read_text())
    assert sidecar["config"]["key_bits"] == 256
    assert sidecar["records"] == 15
    assert sidecar["note"] == "x"
    assert "numpy" in sidecar["environment"]
    assert [row["n"] for row in sidecar["summary"]] == [4, 8, 16]


def test_summary_skips_invalid_records():
    records = [record(t_client=1.0), record(t_client=3.0), record(t_client=100.0, valid=False)]
    (row,) = summarize(records)
    assert row.trials == 2
    assert row.t_client == 2.0
    assert row.speedup_paper == 1.0


def test_format_table():
    table = format_table([record(n=50)]).splitlines()
    assert table[0].split("|")[0].strip() == "Data"
    assert "Client Speedup" in table[0]
    assert table[2].split("|")[0].strip() == "50"
    assert table[3].split("|")[0].strip() == "(ref)"
    assert "1.6463" in table[3]
    assert len(format_table([record(n=4)], reference=False).splitlines()) == 3


def test_fit_exponent():
    ns = [50, 100, 200, 400]
    assert fit_exponent(ns, [n ** 2 for n in ns]) == pytest.approx(2.0)
    assert fit_exponent(ns, [3 * n for n in ns]) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        fit_exponent([1], [1])
    with pytest.raises(ValueError):
        fit_exponent([1, 2], [0, 1])


@pytest.mark.slow
def test_speedup_grows_with_n():
    rows = summarize(run_benchmark([50, 100, 200], trials=5, seed=3))
    speedups = [row.speedup_paper for row in rows]
    assert speedups == sorted(speedups)


@pytest.mark.slow
def test_client_and_worker_growth():
    exponents = complexity_exponents(run_benchmark([50, 100, 200, 400], trials=5, seed=4))
    assert exponents.client <= 1.4
    assert exponents.worker >= 1.7


def test_bench_keypairs_are_cached():
    first = bench_keypair(128, 5)
    assert bench_keypair(128, 5) is first
    assert bench_keypair(128, 6) is not first
