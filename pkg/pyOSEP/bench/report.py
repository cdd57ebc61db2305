"""Benchmark reports: CSV rows, a JSON sidecar and the printed table."""
from __future__ import annotations

import csv
import json
import logging
import platform
import sys
from pathlib import Path
from typing import Iterable, Sequence

import gmpy2
import numpy as np

from pyOSEP.bench.harness import BenchRecord, summarize
from pyOSEP.config import Dict, ProtocolConfig

log = logging.getLogger(__name__)

CSV_COLUMNS = ["n", "trial", "t_original", "t_cloud", "t_client",
               "speedup_paper", "speedup_total", "iterations", "seed",
               "setup_s", "verify_s", "valid"]

# Published reference timings (seconds) on the original hardware:
# n -> (t_original, t_cloud, t_client, client speedup)
REFERENCE_TIMINGS = {
    50: (0.3133, 0.3130, 0.1903, 1.6463),
    100: (1.2921, 1.2911, 0.6037, 2.1403),
    200: (7.3012, 7.3011, 2.2261, 3.2798),
    300: (21.6815, 21.6814, 4.9284, 4.3993),
    400: (47.5771, 47.5761, 9.1275, 5.2125),
    500: (84.9826, 84.9820, 13.3055, 6.3870),
    750: (273.7168, 273.7161, 31.7513, 8.6206),
    1000: (485.7088, 485.7082, 51.0005, 9.5236),
}


def environment() -> Dict:
    return Dict(python=sys.version.split()[0],
                implementation=platform.python_implementation(),
                platform=platform.platform(),
                machine=platform.machine(),
                processor=platform.processor(),
                numpy=np.__version__,
                gmpy2=gmpy2.version())


def write_report(records: Sequence[BenchRecord],
                 path: Path | str,
                 config: ProtocolConfig | None = None,
                 extra: dict | None = None) -> Path:
    """Write the CSV and, next to it, a '.json' sidecar.

    The sidecar holds the protocol configuration, the environment and
    the per-n summary.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for r in records:
            writer.writerow([r.n, r.trial, repr(r.t_original), repr(r.t_cloud),
                             repr(r.t_client), repr(r.speedup_paper), repr(r.speedup_total),
                             r.iterations, r.seed, repr(r.setup_s), repr(r.verify_s),
                             int(r.valid)])
    sidecar = Dict(config=(config or ProtocolConfig()).to_dict(),
                   environment=environment(),
                   records=len(records),
                   summary=summarize(records))
    if extra:
        sidecar.update(extra)
    with open(path.with_suffix(".json"), "w") as f:
        json.dump(sidecar.to_dict(), f, indent=4, sort_keys=True, default=str)
    log.info(f"Wrote {len(records)} records to '{path}'.")
    return path


def read_report(path: Path | str) -> list[BenchRecord]:
    """Parse a CSV written by 'write_report'; speedups are recomputed."""
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [BenchRecord(n=int(row["n"]), trial=int(row["trial"]),
                        t_original=float(row["t_original"]),
                        t_cloud=float(row["t_cloud"]),
                        t_client=float(row["t_client"]),
                        iterations=int(row["iterations"]),
                        seed=int(row["seed"]),
                        setup_s=float(row["setup_s"]),
                        verify_s=float(row["verify_s"]),
                        valid=bool(int(row["valid"])))
            for row in rows]


def format_table(records: Iterable[BenchRecord], reference: bool = True) -> str:
    """Median timings per n as 'Data | t_original | t_cloud | t_client | Client Speedup'."""
    header = f"{'Data':>8} | {'t_original':>11} | {'t_cloud':>11} | {'t_client':>11} | " \
             f"{'Client Speedup':>14}"
    lines = [header, "-" * len(header)]
    for row in summarize(records):
        lines.append(f"{row.n:>8} | {row.t_original:>11.4f} | {row.t_cloud:>11.4f} | "
                     f"{row.t_client:>11.4f} | {row.speedup_paper:>14.4f}")
        if reference and row.n in REFERENCE_TIMINGS:
            t_o, t_cl, t_c, s = REFERENCE_TIMINGS[row.n]
            lines.append(f"{'(ref)':>8} | {t_o:>11.4f} | {t_cl:>11.4f} | {t_c:>11.4f} | "
                         f"{s:>14.4f}")
    return "\n".join(lines)
