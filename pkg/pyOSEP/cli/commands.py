"""Command line entry point.

   pyosep keygen --bits 2048 --out client.key
   pyosep worker --listen 7741 --pubkey client.key.pub --policy honest
   pyosep solve --matrix A.txt --key client.key --worker tcp:127.0.0.1:7741
   pyosep bench --sizes 50,100,200 --trials 5 --out report.csv
   pyosep demo

   Exit codes of 'solve': 0 accepted, 1 rejected, 2 aborted. Every command
   exits with 3 on usage, configuration and file errors.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import random
import sys
from pathlib import Path

import numpy as np

from pyOSEP.bench import (
    BENCH_KEY_BITS,
    complexity_exponents,
    format_table,
    run_benchmark,
    write_report,
)
from pyOSEP.config import ConfigError, Dict, ProtocolConfig, SecurityProfile, load_config
from pyOSEP.core import TransportError, file_out_log, std_out_log
from pyOSEP.crypto import (
    CodecError,
    KeyFileError,
    KeyGenerationError,
    PaillierKeypair,
    decrypt,
    encrypt,
    keygen,
    load_private_key,
    load_public_key,
    save_key,
)
from pyOSEP.crypto.paillier import MIN_KEYSIZE
from pyOSEP.linalg import LinalgError, load_matrix, make_test_matrix, matrix_inf_norm
from pyOSEP.protocol import (
    DEFAULT_PORT,
    AbortReason,
    SocketChannel,
    Verdict,
    WorkerServer,
    WorkerState,
    drive,
    parse_policy,
    solve_in_process,
)
from pyOSEP.protocol.worker import Arbitrary, Honest, Lazy, PolicyFormatError, Tamper

log = logging.getLogger(__name__)

EXIT_ACCEPTED = 0
EXIT_REJECTED = 1
EXIT_ABORTED = 2
EXIT_USAGE = 3

_EXIT_CODES = {Verdict.ACCEPTED: EXIT_ACCEPTED,
               Verdict.REJECTED: EXIT_REJECTED,
               Verdict.ABORTED: EXIT_ABORTED}

_log_handlers: list[logging.Handler] = []


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"'{text}' is not a comma separated list of integers.")
    if not sizes or any(n < 1 for n in sizes):
        raise argparse.ArgumentTypeError("Sizes must be positive integers.")
    return sizes


def _worker_address(text: str) -> tuple[str, int] | None:
    """None for 'inproc', (host, port) for 'tcp:HOST:PORT'."""
    if text == "inproc":
        return None
    scheme, _, rest = text.partition(":")
    host, _, port = rest.rpartition(":")
    if scheme != "tcp" or not host or not port.isdigit():
        raise argparse.ArgumentTypeError(f"'{text}' is neither 'inproc' nor 'tcp:HOST:PORT'.")
    return host, int(port)


def _policy(text: str):
    try:
        return parse_policy(text)
    except PolicyFormatError as e:
        raise argparse.ArgumentTypeError(str(e))


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="pyosep",
                             description="Outsourced power iteration over Paillier encryption.")
    parser.add_argument("--log-level", default="WARNING",
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-file", type=Path, default=None)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("keygen", help="Create a Paillier keypair.")
    p.add_argument("--bits", type=int, default=2048)
    p.add_argument("--out", type=Path, required=True,
                   help="Private key path; the public key goes to OUT.pub.")
    p.add_argument("--force", action="store_true", help="Overwrite existing key files.")
    p.add_argument("--seed", type=int, default=None, help="Deterministic keys, tests only.")
    p.set_defaults(func=cmd_keygen)

    p = commands.add_parser("solve", help="Outsource the dominant eigenpair of a matrix.")
    p.add_argument("--matrix", type=Path, required=True)
    p.add_argument("--key", type=Path, default=None,
                   help="Private key file; a fresh key is generated when omitted.")
    p.add_argument("--config", type=Path, default=None, help="TOML or JSON protocol profile.")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--omega", type=int, default=None)
    p.add_argument("--scaling", choices=["on", "off"], default=None)
    p.add_argument("--mask-bits", type=int, default=None)
    p.add_argument("--verify-tol", type=float, default=None)
    p.add_argument("--profile", default=None,
                   choices=[s.value.lower() for s in SecurityProfile])
    p.add_argument("--timeout", type=float, default=None)
    p.add_argument("--worker", type=_worker_address, default=None,
                   metavar="inproc|tcp:HOST:PORT", help="By default an in-process worker.")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", action="store_true", help="Print the outcome as JSON.")
    p.set_defaults(func=cmd_solve)

    p = commands.add_parser("worker", help="Serve worker sessions over TCP.")
    p.add_argument("--listen", type=int, default=DEFAULT_PORT, metavar="PORT")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--pubkey", type=Path, required=True)
    p.add_argument("--policy", type=_policy, default=Honest(),
                   metavar="honest|tamper:RHO:DELTA|arbitrary|lazy")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_worker)

    p = commands.add_parser("bench", help="Time outsourced against local solves.")
    p.add_argument("--sizes", type=_sizes, default=[50, 100, 200])
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--out", type=Path, default=None, help="CSV report; no file when omitted.")
    p.add_argument("--key-bits", type=int, default=BENCH_KEY_BITS)
    p.add_argument("--baseline", choices=["fixed", "float"], default="fixed")
    p.add_argument("--dominance", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-warmup", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = commands.add_parser("demo", help="Run every worker policy on a planted matrix.")
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--key-bits", type=int, default=512)
    p.add_argument("--omega", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_demo)
    return parser


def _setup_logging(level: str, log_file: Path | None) -> None:
    root = logging.getLogger()
    while _log_handlers:
        root.removeHandler(_log_handlers.pop())
    _log_handlers.append(std_out_log(level))
    if log_file is not None:
        _log_handlers.append(file_out_log(log_file, level))


def cmd_keygen(args) -> int:
    if args.bits < MIN_KEYSIZE:
        raise KeyGenerationError(f"--bits must be at least {MIN_KEYSIZE}, got {args.bits}.")
    public_path = args.out.with_name(args.out.name + ".pub")
    for path in (args.out, public_path):
        if path.exists() and not args.force:
            raise KeyFileError(f"'{path}' exists; pass --force to overwrite it.")
    rng = random.Random(args.seed) if args.seed is not None else None
    pk, sk = keygen(args.bits, rng)
    save_key(args.out, sk, force=args.force)
    save_key(public_path, pk, force=args.force)
    m = random.Random().randrange(pk.n)
    ok = decrypt(sk, pk, encrypt(pk, m)) == m
    print(f"private key: {args.out}")
    print(f"public key:  {public_path}")
    print(f"modulus:     {pk.bits} bits, fingerprint {pk.fingerprint}")
    print(f"roundtrip check: {'ok' if ok else 'FAILED'}")
    return 0 if ok else EXIT_USAGE


def _solve_config(args) -> ProtocolConfig:
    config = load_config(args.config) if args.config else ProtocolConfig()
    changes = {name: value for name, value in
               [("eps", args.eps), ("omega", args.omega), ("mask_bits", args.mask_bits),
                ("verify_tol", args.verify_tol), ("timeout", args.timeout)]
               if value is not None}
    if args.scaling is not None:
        changes["use_scaling"] = args.scaling == "on"
    if args.profile is not None:
        changes["profile"] = SecurityProfile(args.profile.upper())
    return config.replace(**changes)


def _print_outcome(outcome: Dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(outcome.to_dict(), sort_keys=True))
        return
    print(f"verdict:     {outcome.verdict}"
          + (f" ({outcome.abort_reason}: {outcome.detail})" if outcome.abort_reason else ""))
    if outcome.eigenvalue is not None:
        print(f"eigenvalue:  {outcome.eigenvalue:.10g}")
        print("eigenvector: [" + ", ".join(f"{v:.10g}" for v in outcome.eigenvector) + "]")
    print(f"iterations:  {outcome.iterations}")


def cmd_solve(args) -> int:
    config = _solve_config(args)
    A = load_matrix(args.matrix)
    rng = random.Random(args.seed) if args.seed is not None else None
    if args.key is not None:
        sk = load_private_key(args.key)
        keypair = PaillierKeypair(sk.public_key, sk)
    else:
        log.warning(f"No --key given; generating a {config.key_bits}-bit key.")
        keypair = keygen(config.key_bits, rng)

    if args.worker is None:
        outcome = solve_in_process(A, None, config, rng, keypair).to_dict()
    else:
        host, port = args.worker
        try:
            channel = SocketChannel.connect(host, port, config.timeout)
        except TransportError as e:
            outcome = Dict(verdict=Verdict.ABORTED.value,
                           abort_reason=AbortReason.TRANSPORT_ERROR.value,
                           detail=e.message, eigenvalue=None, eigenvector=[],
                           iterations=0, converged=False, rounds=0,
                           transcript_digest=None, timings=Dict())
        else:
            with channel:
                outcome = drive(A, None, config, channel, rng, keypair).to_dict()
    _print_outcome(outcome, args.json)
    return _EXIT_CODES[Verdict(outcome.verdict)]


def cmd_worker(args) -> int:
    pk = load_public_key(args.pubkey)
    sessions = itertools.count()

    def new_session() -> WorkerState:
        rng = None if args.seed is None else random.Random(args.seed + next(sessions))
        return WorkerState(pk, args.policy, rng)

    try:
        server = WorkerServer((args.host, args.listen), new_session)
    except OSError as e:
        raise TransportError(f"Cannot listen on {args.host}:{args.listen}: {e}", cause=e)
    log.warning(f"Worker listening on {args.host}:{server.server_address[1]} "
                f"with the {args.policy} policy.")
    with server:
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            log.warning("Worker interrupted.")
    return 0


def cmd_bench(args) -> int:
    if args.trials < 1:
        raise ConfigError(f"--trials must be positive, got {args.trials}.")
    config = ProtocolConfig(key_bits=args.key_bits)
    records = run_benchmark(args.sizes, args.trials, config, seed=args.seed,
                            dominance=args.dominance, baseline=args.baseline,
                            warmup=not args.no_warmup)
    print(format_table(records))
    if len(set(r.n for r in records if r.valid)) > 1:
        exponents = complexity_exponents(records)
        print(f"per-iteration growth: client n^{exponents.client:.2f}, "
              f"worker n^{exponents.worker:.2f}")
    if args.out is not None:
        write_report(records, args.out, config,
                     extra=Dict(sizes=args.sizes, trials=args.trials,
                                baseline=args.baseline, seed=args.seed))
        print(f"report: {args.out}")
    return 0


def cmd_demo(args) -> int:
    config = ProtocolConfig(key_bits=args.key_bits, omega=args.omega)
    rng = random.Random(args.seed)
    keypair = keygen(config.key_bits, rng)
    A, lam, _ = make_test_matrix(args.n, 1.5, np.random.default_rng(args.seed))
    delta = 10 * config.verify_tol * matrix_inf_norm(A)
    policies = [Honest(), Tamper(1.0, delta), Arbitrary(), Lazy()]
    print(f"planted eigenvalue {lam:.10g}, n={args.n}")
    print(f"{'policy':<24} | {'verdict':<9} | {'reason':<21} | rounds")
    for policy in policies:
        worker = WorkerState(keypair.public_key, policy, random.Random(args.seed))
        outcome = solve_in_process(A, None, config, random.Random(args.seed), keypair,
                                   worker=worker)
        reason = outcome.abort_reason.value if outcome.abort_reason else "-"
        print(f"{str(policy):<24} | {outcome.verdict.value:<9} | {reason:<21} | "
              f"{outcome.rounds}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_level, args.log_file)
    try:
        return args.func(args)
    except (ConfigError, KeyFileError, KeyGenerationError, CodecError, LinalgError,
            TransportError) as e:
        print(f"{parser.prog}: error: {e.message}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as e:
        print(f"{parser.prog}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
