"""The cloud side of the protocol.

   A WorkerState holds the public key and the encrypted matrix of one
   session and answers MatVecRequest messages with the homomorphic
   product. It never sees a PrivateKey. An AdversaryPolicy decides how the
   honest answer is altered before it is returned.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from time import perf_counter

from pyOSEP.core import (
    DuplicateStoreError,
    MalformedGridError,
    MessageDispatcher,
    MessageHandler,
    MessageKind,
    NoMatrixError,
    WorkerError,
)
from pyOSEP.crypto.encoding import CodecError, FixedPointCodec
from pyOSEP.crypto.paillier import (
    Ciphertext,
    PaillierError,
    PublicKey,
    add_cipher,
    add_plain,
    encrypt,
    scalar_mul,
)
from pyOSEP.protocol.messages import (
    ProtocolMessage,
    ack_message,
    error_message,
    matvec_response,
)

log = logging.getLogger(__name__)


class VectorLengthError(WorkerError):
    pass


class KeyFingerprintError(WorkerError):
    pass


class PolicyFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Honest:
    def __str__(self):
        return "honest"


@dataclass(frozen=True)
class Tamper:
    """Add a session-fixed perturbation to the response, each round with probability rho.

    Attributes
    ----------
    rho : float
        Probability in [0, 1] that a round is tampered with.
    delta : float
        Largest magnitude of a perturbation, in the units of the decoded product.
    """
    rho: float
    delta: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise PolicyFormatError(f"rho must lie in [0, 1], got {self.rho}.")
        if not self.delta >= 0.0:
            raise PolicyFormatError(f"delta must be non-negative, got {self.delta}.")

    def __str__(self):
        return f"tamper:{self.rho:g}:{self.delta:g}"


@dataclass(frozen=True)
class Arbitrary:
    def __str__(self):
        return "arbitrary"


@dataclass(frozen=True)
class Lazy:
    def __str__(self):
        return "lazy"


AdversaryPolicy = Honest | Tamper | Arbitrary | Lazy


def parse_policy(text: str) -> AdversaryPolicy:
    """Parse 'honest', 'tamper:RHO:DELTA', 'arbitrary' or 'lazy'."""
    name, *args = text.strip().lower().split(":")
    match name, args:
        case "honest", []:
            return Honest()
        case "arbitrary", []:
            return Arbitrary()
        case "lazy", []:
            return Lazy()
        case "tamper", [rho, delta]:
            try:
                return Tamper(float(rho), float(delta))
            except ValueError as e:
                raise PolicyFormatError(f"Invalid tamper parameters in '{text}'.") from e
        case _:
            raise PolicyFormatError(
                f"Unknown policy '{text}'; use honest, tamper:RHO:DELTA, arbitrary or lazy.")


class WorkerState(MessageHandler):
    """State of one worker session.

    Parameters
    ----------
    pk : PublicKey
        The client's public key.
    policy : AdversaryPolicy, optional
        By default Honest().
    rng : random.Random, optional
        Randomness of the adversarial policies.
    """

    def __init__(self, pk: PublicKey, policy: AdversaryPolicy | None = None, rng=None):
        if not isinstance(pk, PublicKey):
            raise TypeError(f"A worker takes a PublicKey, not {type(pk).__name__}.")
        self.pk = pk
        self.policy = policy or Honest()
        self.rng = rng or random.Random()
        self.enc_A: list[list[Ciphertext]] | None = None
        self.dim = 0
        self.session_id = ""
        self.last_response: list[Ciphertext] | None = None
        self.rounds = 0
        self.compute_seconds = 0.0
        self.tamper_offsets: dict[int, int] = {}
        self.dispatcher = MessageDispatcher()
        self.dispatcher.register(MessageKind.STORE_MATRIX, self.store_matrix)
        self.dispatcher.register(MessageKind.MATVEC_REQUEST, self.encrypted_matvec)

    def handle_message(self, message: ProtocolMessage) -> ProtocolMessage:
        try:
            return self.dispatcher.dispatch(message)
        except WorkerError as e:
            log.warning(f"{e.code}: {e.message}")
            return error_message(message.session_id, e.code, e.message)

    def on_exit(self) -> None:
        log.info(f"Session {self.session_id or '-'} ended after {self.rounds} rounds, "
                 f"{self.compute_seconds:.3f} s of computation.")

    def store_matrix(self, msg: ProtocolMessage) -> ProtocolMessage:
        """Keep the encrypted matrix of the session.

        Raises
        ------
        DuplicateStoreError
            A matrix is already stored.
        MalformedGridError
            The grid is empty, not square, or does not match the key.
        """
        if self.enc_A is not None:
            raise DuplicateStoreError(f"Session {self.session_id} already stored its matrix.")
        payload = msg.payload
        grid = payload.matrix
        n = len(grid)
        if n == 0 or payload.dim != n or any(len(row) != n for row in grid):
            raise MalformedGridError(f"Expected a square grid of order {payload.dim}.")
        if payload.key_fingerprint != self.pk.fingerprint:
            raise KeyFingerprintError("The matrix was encrypted under another key.")
        if any(not 0 < v < self.pk.n_squared for row in grid for v in row):
            raise MalformedGridError("A matrix entry lies outside (0, n^2).")
        self.enc_A = msg.ciphertext_grid()
        self.dim = n
        self.session_id = msg.session_id
        if isinstance(self.policy, Tamper):
            self.tamper_offsets = self._draw_tamper_pattern(payload.frac_bits)
        log.info(f"Stored a {n}x{n} encrypted matrix for session {self.session_id}.")
        return ack_message(msg.session_id)

    def _draw_tamper_pattern(self, frac_bits: int) -> dict[int, int]:
        components = [i for i in range(self.dim) if self.rng.random() < 0.5]
        if not components:
            components = [self.rng.randrange(self.dim)]
        delta = self.policy.delta
        values = {i: self.rng.choice((-1.0, 1.0)) * self.rng.uniform(delta / 2, delta)
                  for i in components}
        try:
            codec = FixedPointCodec(self.pk.n, frac_bits, guard_bits=0)
            return {i: codec.encode(v, 2) for i, v in values.items()}
        except CodecError as e:
            raise MalformedGridError(
                f"frac_bits={frac_bits} cannot carry a perturbation of {delta:g}.", cause=e)

    def _honest_product(self, z: list[int]) -> list[Ciphertext]:
        pk = self.pk
        out = []
        for row in self.enc_A:
            acc = None
            for c, z_j in zip(row, z):
                term = scalar_mul(pk, c, z_j)
                acc = term if acc is None else add_cipher(pk, acc, term)
            out.append(acc)
        return out

    def encrypted_matvec(self, msg: ProtocolMessage) -> ProtocolMessage:
        """Answer a round with the encrypted product, altered per the policy.

        Raises
        ------
        NoMatrixError
            No StoreMatrix preceded the request.
        VectorLengthError
            The vector length differs from the stored order or an entry
            is not a residue of [0, n).
        """
        if self.enc_A is None:
            raise NoMatrixError("A MatVecRequest arrived before the matrix was stored.")
        z = msg.payload.vector
        if len(z) != self.dim:
            raise VectorLengthError(f"Expected {self.dim} components, got {len(z)}.")
        if any(not 0 <= v < self.pk.n for v in z):
            raise VectorLengthError("Vector components must be residues of [0, n).")
        start = perf_counter()
        try:
            out = self._respond(z)
        except PaillierError as e:
            raise WorkerError(f"Homomorphic evaluation failed: {e.message}", cause=e)
        self.compute_seconds += perf_counter() - start
        self.last_response = out
        self.rounds += 1
        return matvec_response(msg.session_id, msg.round_index, out, self.pk.fingerprint)

    def _respond(self, z: list[int]) -> list[Ciphertext]:
        pk = self.pk
        match self.policy:
            case Arbitrary():
                return [encrypt(pk, self.rng.randrange(pk.n), rng=self.rng)
                        for _ in range(self.dim)]
            case Lazy() if self.last_response is not None:
                return list(self.last_response)
            case Tamper(rho=rho):
                out = self._honest_product(z)
                if self.rng.random() < rho:
                    for i, offset in self.tamper_offsets.items():
                        out[i] = add_plain(pk, out[i], offset)
                return out
            case _:
                return self._honest_product(z)
