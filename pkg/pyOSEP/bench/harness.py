"""Timing of the outsourced solve against the local solve.

   Every trial is the pipeline

       plant() >> local_solve() >> outsourced_solve(config, keypair) >> to_record()

   run on the same machine with the in-process channel. t_client counts the
   client's setup, round and verification work, t_cloud the worker's
   homomorphic evaluation. Serialization and queue hand-over belong to
   neither bucket.
"""
from __future__ import annotations

import functools
import logging
import random
from dataclasses import asdict, dataclass, fields
from time import perf_counter
from typing import Iterable, Sequence

import numpy as np

from pyOSEP.config import Dict, ProtocolConfig
from pyOSEP.core import AbstractProcess, processFactory, processLogic
from pyOSEP.crypto.encoding import FixedPointCodec
from pyOSEP.crypto.paillier import PaillierKeypair, keygen
from pyOSEP.linalg.dense import local_power_iteration, make_test_matrix
from pyOSEP.protocol.client import Verdict, solve_in_process
from pyOSEP.protocol.worker import WorkerState

log = logging.getLogger(__name__)

BENCH_KEY_BITS = 512
DEFAULT_DOMINANCE = 1.5
BASELINES = ("fixed", "float")


@dataclass(frozen=True)
class BenchRecord:
    n: int
    trial: int
    t_original: float
    t_cloud: float
    t_client: float
    iterations: int
    seed: int
    setup_s: float = 0.0
    verify_s: float = 0.0
    valid: bool = True

    @property
    def speedup_paper(self) -> float:
        """t_original / t_client"""
        return self.t_original / self.t_client if self.t_client > 0 else float("inf")

    @property
    def speedup_total(self) -> float:
        """t_original / (t_client + t_cloud)"""
        total = self.t_client + self.t_cloud
        return self.t_original / total if total > 0 else float("inf")

    @property
    def client_round_s(self) -> float:
        """Client seconds per iteration, setup and verification excluded."""
        rounds = self.t_client - self.setup_s - self.verify_s
        return max(rounds, 0.0) / max(self.iterations, 1)

    @property
    def cloud_round_s(self) -> float:
        return self.t_cloud / max(self.iterations, 1)

    def to_dict(self) -> Dict:
        return Dict(asdict(self))

    @staticmethod
    def field_names() -> list[str]:
        return [f.name for f in fields(BenchRecord)]


@functools.lru_cache(maxsize=8)
def bench_keypair(bits: int, seed: int) -> PaillierKeypair:
    return keygen(bits, random.Random(seed))


@processLogic
def plant(n: int, seed: int, dominance: float = DEFAULT_DOMINANCE, **kwargs) -> Dict:
    A, lam, v = make_test_matrix(n, dominance, np.random.default_rng(seed))
    return Dict(A=A, planted_lambda=lam, planted_vector=v, x0=np.ones(n))


@processLogic
def local_solve(A, x0, config: ProtocolConfig, codec: FixedPointCodec,
                baseline: str = "fixed", **kwargs) -> Dict:
    omega = config.omega_for(A.shape[0])
    start = perf_counter()
    result = local_power_iteration(A, x0, config.eps, omega,
                                   codec=codec if baseline == "fixed" else None)
    return Dict(t_original=perf_counter() - start, local_result=result)


class OutsourcedSolve(AbstractProcess):
    def __init__(self, config: ProtocolConfig, keypair: PaillierKeypair):
        self.config = config
        self.keypair = keypair

    def __call__(self, A, x0, seed: int, **kwargs) -> Dict:
        worker = WorkerState(self.keypair.public_key)
        start = perf_counter()
        outcome = solve_in_process(A, x0, self.config, random.Random(seed),
                                   self.keypair, worker=worker)
        wall = perf_counter() - start
        timings = outcome.timings
        t_client = timings.setup + timings.rounds + timings.verify
        return Dict(outcome=outcome, t_client=t_client, t_cloud=worker.compute_seconds,
                    setup_s=timings.setup, verify_s=timings.verify, wall_s=wall)


@processFactory(cache=False)
def outsourced_solve(config: ProtocolConfig, keypair: PaillierKeypair) -> AbstractProcess:
    return OutsourcedSolve(config, keypair)


@processLogic
def to_record(n: int, trial: int, seed: int, outcome, local_result,
              t_original: float, t_client: float, t_cloud: float,
              setup_s: float, verify_s: float, **kwargs) -> Dict:
    valid = outcome.verdict == Verdict.ACCEPTED
    if not valid:
        log.warning(f"n={n} trial={trial}: {outcome.verdict.value} "
                    f"{outcome.abort_reason.value if outcome.abort_reason else ''}; "
                    f"the record is excluded from the medians.")
    elif outcome.rounds != local_result.iterations:
        log.warning(f"n={n} trial={trial}: {outcome.rounds} rounds against "
                    f"{local_result.iterations} local iterations.")
    record = BenchRecord(n=n, trial=trial, t_original=t_original, t_cloud=t_cloud,
                         t_client=t_client, iterations=outcome.rounds, seed=seed,
                         setup_s=setup_s, verify_s=verify_s, valid=valid)
    return Dict(record=record)


def trial_pipeline(config: ProtocolConfig, keypair: PaillierKeypair):
    return plant() >> local_solve() >> outsourced_solve(config, keypair) >> to_record()


def run_benchmark(sizes: Sequence[int],
                  trials: int = 5,
                  config: ProtocolConfig | None = None,
                  seed: int = 0,
                  dominance: float = DEFAULT_DOMINANCE,
                  baseline: str = "fixed",
                  warmup: bool = True) -> list[BenchRecord]:
    """Time 'trials' planted problems for every size.

    Parameters
    ----------
    sizes : Sequence[int]
        Matrix orders, non-empty.
    trials : int, optional
        Trials per size, by default 5.
    config : ProtocolConfig, optional
        By default a ProtocolConfig with 512-bit keys.
    seed : int, optional
        Base seed; trial t of size n uses seed + 1000 * n + t.
    dominance : float, optional
        Planted dominance ratio, by default 1.5.
    baseline : str, optional
        'fixed' times the local solve in the protocol's fixed-point
        arithmetic, 'float' in numpy floating point.
    warmup : bool, optional
        Run and discard one trial at the first size first.

    Returns
    -------
    list[BenchRecord]
        One record per (n, trial), invalid ones flagged.
    """
    sizes = list(sizes)
    if not sizes or trials < 1:
        raise ValueError("Benchmarks need at least one size and one trial.")
    if baseline not in BASELINES:
        raise ValueError(f"baseline must be one of {BASELINES}, got '{baseline}'.")
    config = config or ProtocolConfig(key_bits=BENCH_KEY_BITS)
    keypair = bench_keypair(config.key_bits, seed)
    codec = FixedPointCodec(keypair.public_key.n, config.frac_bits, config.guard_bits)
    pipeline = trial_pipeline(config, keypair)
    shared = Dict(config=config, codec=codec, dominance=dominance, baseline=baseline)

    if warmup:
        pipeline(n=sizes[0], trial=-1, seed=seed, **shared)
    records = []
    for n in sizes:
        for trial in range(trials):
            payload = pipeline(n=n, trial=trial, seed=seed + 1000 * n + trial, **shared)
            record = payload.record
            log.info(f"n={n} trial={trial}: t_original={record.t_original:.4f} "
                     f"t_client={record.t_client:.4f} t_cloud={record.t_cloud:.4f} "
                     f"iterations={record.iterations}")
            records.append(record)
    return records


def fit_exponent(ns: Iterable[float], times: Iterable[float]) -> float:
    """Slope of log(time) against log(n)."""
    ns = np.asarray(list(ns), dtype=float)
    times = np.asarray(list(times), dtype=float)
    if ns.size < 2 or np.any(ns <= 0) or np.any(times <= 0):
        raise ValueError("Need at least two positive (n, time) points.")
    slope, _ = np.polyfit(np.log(ns), np.log(times), 1)
    return float(slope)


def summarize(records: Iterable[BenchRecord]) -> list[Dict]:
    """Medians per n over the valid records; speedups from the median times."""
    by_n: dict[int, list[BenchRecord]] = {}
    for record in records:
        if record.valid:
            by_n.setdefault(record.n, []).append(record)
    rows = []
    for n in sorted(by_n):
        group = by_n[n]

        def median(name: str) -> float:
            return float(np.median([getattr(r, name) for r in group]))

        row = Dict(n=n, trials=len(group),
                   t_original=median("t_original"), t_cloud=median("t_cloud"),
                   t_client=median("t_client"), setup_s=median("setup_s"),
                   iterations=median("iterations"),
                   client_round_s=median("client_round_s"),
                   cloud_round_s=median("cloud_round_s"))
        row.speedup_paper = row.t_original / row.t_client if row.t_client > 0 else float("inf")
        total = row.t_client + row.t_cloud
        row.speedup_total = row.t_original / total if total > 0 else float("inf")
        rows.append(row)
    return rows


def complexity_exponents(records: Iterable[BenchRecord]) -> Dict:
    """Fitted growth of the per-iteration client and worker times."""
    rows = summarize(records)
    ns = [row.n for row in rows]
    return Dict(client=fit_exponent(ns, [row.client_round_s for row in rows]),
                worker=fit_exponent(ns, [row.cloud_round_s for row in rows]))
