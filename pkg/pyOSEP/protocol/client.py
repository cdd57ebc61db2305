"""The customer side of the protocol.

   Notes:
   ------
       1- Setup encrypts the fixed-point matrix once and draws the mask
          r. Every round sends z = x + r (optionally multiplied by a
          fresh unit a_k of Z_n), and the response decrypts to A.z. The
          client removes the precomputed offset c = A.r to recover A.x.
       2- The mask and offset stay inside the session and have no accessor.
       3- All unmasking is exact integer arithmetic. The recovered product
          equals the one computed by 'local_power_iteration' with the same
          codec, so both converge at the same round.
       4- A response whose unmasked product exceeds the largest honest
          magnitude, max_i sum_j |A_int[i, j]| * 2^f, aborts the round.
"""
from __future__ import annotations

import hashlib
import logging
import secrets
import threading
from dataclasses import dataclass, field
from enum import Enum
from time import perf_counter

import gmpy2
import numpy as np

from pyOSEP.config import Dict, ProtocolConfig
from pyOSEP.core import (
    MessageKind,
    PhaseError,
    RoundMismatchError,
    TransportError,
)
from pyOSEP.crypto.encoding import CodecOverflowError, FixedPointCodec, fixed_product, row_bound
from pyOSEP.crypto.paillier import PaillierError, PaillierKeypair, decrypt, encrypt, keygen
from pyOSEP.linalg.dense import (
    EigenResult,
    ZeroIterateError,
    as_matrix,
    as_vector,
    iterate_distance,
    matrix_inf_norm,
    power_step,
    residual_norm,
    signed_normalize,
)
from pyOSEP.protocol.messages import (
    ProtocolMessage,
    matvec_request,
    store_matrix_message,
)
from pyOSEP.protocol.transport import Channel, InProcessChannel, serve
from pyOSEP.protocol.worker import AdversaryPolicy, WorkerState

log = logging.getLogger(__name__)


class Phase(str, Enum):
    SETUP = "Setup"
    ITERATING = "Iterating"
    CONVERGED = "Converged"
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    ABORTED = "Aborted"


_TRANSITIONS = {
    Phase.SETUP: {Phase.ITERATING},
    Phase.ITERATING: {Phase.CONVERGED, Phase.ABORTED},
    Phase.CONVERGED: {Phase.ACCEPTED, Phase.REJECTED},
    Phase.ACCEPTED: set(),
    Phase.REJECTED: set(),
    Phase.ABORTED: set(),
}


class Verdict(str, Enum):
    ACCEPTED = "Accepted"
    REJECTED = "Rejected"
    ABORTED = "Aborted"


class AbortReason(str, Enum):
    ITERATION_CAP_EXCEEDED = "IterationCapExceeded"
    MALFORMED_RESPONSE = "MalformedResponse"
    TRANSPORT_ERROR = "TransportError"
    WORKER_ERROR = "WorkerError"


@dataclass(frozen=True)
class NextRequest:
    message: ProtocolMessage


@dataclass(frozen=True)
class ConvergedWith:
    result: EigenResult


@dataclass(frozen=True)
class Abort:
    reason: AbortReason
    detail: str = ""


RoundOutcome = NextRequest | ConvergedWith | Abort


@dataclass(frozen=True)
class SolveOutcome:
    result: EigenResult
    verdict: Verdict
    rounds: int
    transcript_digest: str
    abort_reason: AbortReason | None = None
    detail: str = ""
    timings: Dict = field(default_factory=Dict)

    def to_dict(self) -> Dict:
        return Dict(verdict=self.verdict.value,
                    abort_reason=self.abort_reason.value if self.abort_reason else None,
                    detail=self.detail,
                    eigenvalue=float(self.result.eigenvalue),
                    eigenvector=[float(v) for v in self.result.eigenvector],
                    iterations=self.result.iterations,
                    converged=self.result.converged,
                    rounds=self.rounds,
                    transcript_digest=self.transcript_digest,
                    timings=Dict(self.timings))


def _draw_mask(dim: int, bits: int, rng) -> list[int]:
    """dim integers of exactly 'bits' bits."""
    top = 1 << (bits - 1)
    return [top | rng.getrandbits(bits - 1) if bits > 1 else 1 for _ in range(dim)]


class ClientSession:
    """Single-owner state of one outsourced solve.

    Built by 'ClientSession.setup'; driven by feeding every response to
    'ingest_round' and, after convergence, calling 'verify'.
    """

    def __init__(self, A: np.ndarray, x: np.ndarray, config: ProtocolConfig,
                 keypair: PaillierKeypair, codec: FixedPointCodec, rng):
        self.phase = Phase.SETUP
        self.A = A
        self.dim = A.shape[0]
        self.x = x
        self.k = 0
        self.config = config
        self.omega = config.omega_for(self.dim)
        self.public_key = keypair.public_key
        self.__private_key = keypair.private_key
        self.codec = codec
        self.rng = rng
        self.session_id = f"{rng.getrandbits(64):016x}"
        self.pending: ProtocolMessage | None = None
        self.last_product: np.ndarray | None = None
        self.result: EigenResult | None = None
        self.eigenvalue = float("nan")
        self.timers = Dict(setup=0.0, rounds=0.0, verify=0.0)
        self.__mask: list[int] = []
        self.__offset: list[int] = []
        self.__unscale = 1
        self.__response_bound = 0

    @classmethod
    def setup(cls, A, x0=None,
              config: ProtocolConfig | None = None,
              rng=None,
              keypair: PaillierKeypair | None = None
              ) -> tuple[ClientSession, ProtocolMessage, ProtocolMessage]:
        """Encrypt the matrix, mask the start vector, build the first messages.

        Parameters
        ----------
        A : array_like
            Square matrix, kept by the session for the final verification.
        x0 : array_like, optional
            Nonzero start vector, by default all ones.
        config : ProtocolConfig, optional
            By default ProtocolConfig().
        rng : random.Random, optional
            Source of every random choice, by default secrets.SystemRandom().
        keypair : PaillierKeypair, optional
            A keypair of config.key_bits bits is generated when omitted.

        Returns
        -------
        (ClientSession, StoreMatrix message, first MatVecRequest message)

        Raises
        ------
        ZeroVectorError
            x0 is the zero vector.
        CodecRangeError
            The key is too small for the configured precision.
        CodecOverflowError
            A matrix entry, or the masked product, does not fit the key.
        """
        start = perf_counter()
        config = config or ProtocolConfig()
        rng = rng or secrets.SystemRandom()
        A = as_matrix(A)
        dim = A.shape[0]
        x = signed_normalize(as_vector(np.ones(dim) if x0 is None else x0, dim))
        keypair = keypair or keygen(config.key_bits, rng)
        pk = keypair.public_key
        codec = FixedPointCodec(pk.n, config.frac_bits, config.guard_bits)

        session = cls(A, x, config, keypair, codec, rng)
        store = session._prepare(rng)
        session._move(Phase.ITERATING)
        request = session._request()
        session.timers.setup += perf_counter() - start
        log.info(f"Session {session.session_id}: {dim}x{dim} matrix, {pk.bits}-bit key, "
                 f"omega={session.omega}, scaling={'on' if config.use_scaling else 'off'}.")
        return session, store, request

    def _prepare(self, rng) -> ProtocolMessage:
        codec, pk = self.codec, self.public_key
        A_int = codec.fixed_matrix(self.A)
        mask = _draw_mask(self.dim, self.config.mask_bits, rng)
        bound = row_bound(A_int)
        largest_z = max(mask) + (1 << codec.frac_bits)
        if bound * largest_z > codec.max_int:
            raise CodecOverflowError(
                f"A {pk.bits}-bit key cannot hold the masked product; use a larger key "
                f"or fewer mask bits.")
        self.__mask = mask
        self.__offset = fixed_product(A_int, mask)
        self.__response_bound = bound << codec.frac_bits
        grid = [[encrypt(pk, codec.to_residue(a), rng=rng) for a in row] for row in A_int]
        return store_matrix_message(self.session_id, grid, codec.frac_bits)

    def _move(self, phase: Phase) -> None:
        if phase not in _TRANSITIONS[self.phase]:
            raise PhaseError(f"Cannot move from {self.phase.value} to {phase.value}.")
        log.debug(f"Session {self.session_id}: {self.phase.value} -> {phase.value}.")
        self.phase = phase

    def _request(self) -> ProtocolMessage:
        codec, n = self.codec, self.public_key.n
        z = [x + r for x, r in zip(codec.fixed_vector(self.x, 1), self.__mask)]
        if self.config.use_scaling:
            a_k = self.public_key.random_unit(self.rng)
            self.__unscale = int(gmpy2.invert(a_k, n))
            payload = [a_k * v % n for v in z]
        else:
            payload = [v % n for v in z]
        self.pending = matvec_request(self.session_id, self.k, payload)
        return self.pending

    def _result(self, converged: bool) -> EigenResult:
        return EigenResult(self.eigenvalue, self.x, self.k, converged)

    def abort(self, reason: AbortReason, detail: str = "") -> Abort:
        """Stop an iterating session."""
        self._move(Phase.ABORTED)
        self.result = self._result(False)
        log.warning(f"Session {self.session_id} aborted at round {self.k}: "
                    f"{reason.value} {detail}".rstrip())
        return Abort(reason, detail)

    def ingest_round(self, response: ProtocolMessage) -> RoundOutcome:
        """Unmask the response of round k and decide how to go on.

        Raises
        ------
        PhaseError
            The session is not iterating.
        RoundMismatchError
            The response answers another round.
        KeyMismatchError
            A ciphertext was produced under another key.
        """
        if self.phase != Phase.ITERATING:
            raise PhaseError(f"ingest_round needs {Phase.ITERATING.value}, "
                             f"the session is {self.phase.value}.")
        match response.kind:
            case MessageKind.ERROR:
                return self.abort(AbortReason.WORKER_ERROR,
                                  f"{response.payload.code}: {response.payload.text}")
            case MessageKind.MATVEC_RESPONSE:
                pass
            case _:
                return self.abort(AbortReason.MALFORMED_RESPONSE,
                                  f"unexpected {response.kind.value} message")
        if response.round_index != self.k or response.session_id != self.session_id:
            raise RoundMismatchError(
                f"Expected round {self.k} of session {self.session_id}, got round "
                f"{response.round_index} of session {response.session_id}.")
        ciphertexts = response.ciphertexts()
        if len(ciphertexts) != self.dim:
            return self.abort(AbortReason.MALFORMED_RESPONSE,
                              f"{len(ciphertexts)} components instead of {self.dim}")

        start = perf_counter()
        try:
            outcome = self._unmask_and_step(ciphertexts)
        finally:
            self.timers.rounds += perf_counter() - start
        return outcome

    def _unmask_and_step(self, ciphertexts) -> RoundOutcome:
        codec, pk, sk = self.codec, self.public_key, self.__private_key
        n = pk.n
        y_int = []
        for c, offset in zip(ciphertexts, self.__offset):
            t = decrypt(sk, pk, c)
            if self.config.use_scaling:
                t = t * self.__unscale % n
            y_int.append(codec.to_signed(t) - offset)
        if max(abs(v) for v in y_int) > self.__response_bound:
            return self.abort(AbortReason.MALFORMED_RESPONSE,
                              "unmasked product exceeds the honest bound")
        y = np.array([codec.from_fixed(v, 2) for v in y_int], dtype=float)
        self.last_product = y
        try:
            x_next, lam = power_step(y)
        except ZeroIterateError:
            return self.abort(AbortReason.MALFORMED_RESPONSE, "zero iterate")

        distance = iterate_distance(self.x, x_next)
        self.x, self.eigenvalue = x_next, lam
        self.k += 1
        log.debug(f"Session {self.session_id} round {self.k}: lambda={lam:.10g}, "
                  f"distance={distance:.3e}.")
        if distance <= self.config.eps:
            self._move(Phase.CONVERGED)
            self.result = self._result(True)
            return ConvergedWith(self.result)
        if self.k >= self.omega:
            return self.abort(AbortReason.ITERATION_CAP_EXCEEDED,
                              f"no convergence in {self.omega} rounds")
        return NextRequest(self._request())

    def verify(self, candidate: EigenResult | None = None) -> Verdict:
        """Check ||A.x - lambda.x||_inf <= verify_tol * ||A||_inf * ||x||_inf on plaintext A.

        Raises
        ------
        PhaseError
            The session has not converged.
        """
        if self.phase != Phase.CONVERGED:
            raise PhaseError(f"verify needs {Phase.CONVERGED.value}, "
                             f"the session is {self.phase.value}.")
        start = perf_counter()
        candidate = candidate or self.result
        x = np.asarray(candidate.eigenvector, dtype=float)
        residual = residual_norm(self.A, x, candidate.eigenvalue)
        bound = self.config.verify_tol * matrix_inf_norm(self.A) * float(np.max(np.abs(x)))
        accepted = bool(np.isfinite(residual) and residual <= bound)
        self._move(Phase.ACCEPTED if accepted else Phase.REJECTED)
        self.timers.verify += perf_counter() - start
        log.info(f"Session {self.session_id}: residual {residual:.3e} against bound "
                 f"{bound:.3e}, {self.phase.value}.")
        return Verdict.ACCEPTED if accepted else Verdict.REJECTED


def drive(A, x0,
          config: ProtocolConfig | None,
          transport: Channel,
          rng=None,
          keypair: PaillierKeypair | None = None) -> SolveOutcome:
    """Run a whole outsourced solve over a connected client end.

    Transport failures and worker errors end the run as Aborted; they are
    never raised. The digest is SHA-256 over every frame sent and received.
    """
    config = config or ProtocolConfig()
    transcript = hashlib.sha256()
    transport.recorder = transcript.update
    session, store, request = ClientSession.setup(A, x0, config, rng, keypair)

    outcome: RoundOutcome | None = None
    try:
        transport.send(store)
        reply = transport.receive(config.timeout)
        match reply.kind:
            case MessageKind.ACK:
                transport.send(request)
            case MessageKind.ERROR:
                outcome = session.abort(AbortReason.WORKER_ERROR,
                                        f"{reply.payload.code}: {reply.payload.text}")
            case _:
                outcome = session.abort(AbortReason.MALFORMED_RESPONSE,
                                        f"{reply.kind.value} instead of Ack")
        while outcome is None:
            response = transport.receive(config.timeout)
            try:
                step = session.ingest_round(response)
            except (RoundMismatchError, PaillierError) as e:
                step = session.abort(AbortReason.MALFORMED_RESPONSE, e.message)
            match step:
                case NextRequest(message=message):
                    transport.send(message)
                case _:
                    outcome = step
    except TransportError as e:
        outcome = session.abort(AbortReason.TRANSPORT_ERROR, e.message)

    verdict, reason, detail = Verdict.ABORTED, None, ""
    match outcome:
        case ConvergedWith(result=result):
            verdict = session.verify(result)
        case Abort(reason=reason, detail=detail):
            pass
    return SolveOutcome(result=session.result,
                        verdict=verdict,
                        rounds=session.k,
                        transcript_digest=transcript.hexdigest(),
                        abort_reason=reason,
                        detail=detail,
                        timings=Dict(session.timers))


def solve_in_process(A, x0=None,
                     config: ProtocolConfig | None = None,
                     rng=None,
                     keypair: PaillierKeypair | None = None,
                     policy: AdversaryPolicy | None = None,
                     worker: WorkerState | None = None) -> SolveOutcome:
    """Solve against a worker served on a thread of this process.

    A 'worker' may be passed to read its counters afterwards; it must
    hold the public key of 'keypair'.
    """
    config = config or ProtocolConfig()
    if keypair is None:
        keypair = keygen(config.key_bits, rng)
    worker = worker or WorkerState(keypair.public_key, policy)
    client_end, worker_end = InProcessChannel.pair()
    thread = threading.Thread(target=serve, args=(worker_end, worker),
                              name="in-process-worker", daemon=True)
    thread.start()
    try:
        return drive(A, x0, config, client_end, rng, keypair)
    finally:
        client_end.close()
        thread.join(config.timeout)

