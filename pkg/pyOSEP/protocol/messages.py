"""Protocol messages and their wire form.

   A frame is a 4-byte big-endian body length followed by a UTF-8 JSON
   body. The body has the keys 'version', 'kind', 'session_id', 'payload'
   and, for MatVecRequest and MatVecResponse only, 'round_index'. Keys are
   sorted and no whitespace is emitted, so equal messages give equal bytes.
   Big integers (ciphertexts and masked residues) travel as canonical
   lowercase hexadecimal strings.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Sequence

from pyOSEP.config import Dict
from pyOSEP.core import (
    FrameError,
    MessageKind,
    NonCanonicalIntegerError,
    TruncatedFrameError,
    VersionMismatchError,
)
from pyOSEP.crypto.paillier import Ciphertext, HexFormatError, from_hex, to_hex

PROTOCOL_VERSION = 1
HEADER = struct.Struct(">I")
MAX_FRAME_BYTES = 1 << 30

_BODY_KEYS = {"version", "kind", "session_id", "payload"}


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    session_id: str
    payload: Dict = field(default_factory=Dict)
    round_index: int | None = None
    version: int = PROTOCOL_VERSION

    def __post_init__(self):
        object.__setattr__(self, "kind", MessageKind(self.kind))
        if self.kind.has_round != (self.round_index is not None):
            raise FrameError(f"round_index must be given exactly for request/response, "
                             f"not for {self.kind.value}.")

    def ciphertexts(self) -> list[Ciphertext]:
        """The response vector as Ciphertext values."""
        fp = self.payload.key_fingerprint
        return [Ciphertext(v, fp) for v in self.payload.vector]

    def ciphertext_grid(self) -> list[list[Ciphertext]]:
        fp = self.payload.key_fingerprint
        return [[Ciphertext(v, fp) for v in row] for row in self.payload.matrix]

    def __repr__(self):
        r = "" if self.round_index is None else f" round={self.round_index}"
        return f"<{self.kind.value} session={self.session_id}{r}>"


def store_matrix_message(session_id: str,
                         grid: Sequence[Sequence[Ciphertext]],
                         frac_bits: int) -> ProtocolMessage:
    fingerprint = grid[0][0].key_fingerprint
    return ProtocolMessage(MessageKind.STORE_MATRIX, session_id,
                           Dict(dim=len(grid), frac_bits=frac_bits,
                                key_fingerprint=fingerprint,
                                matrix=[[c.value for c in row] for row in grid]))


def matvec_request(session_id: str, round_index: int, vector: Sequence[int]) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.MATVEC_REQUEST, session_id,
                           Dict(vector=[int(v) for v in vector]), round_index=round_index)


def matvec_response(session_id: str,
                    round_index: int,
                    vector: Sequence[Ciphertext],
                    key_fingerprint: str) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.MATVEC_RESPONSE, session_id,
                           Dict(key_fingerprint=key_fingerprint,
                                vector=[c.value for c in vector]),
                           round_index=round_index)


def ack_message(session_id: str) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.ACK, session_id)


def error_message(session_id: str, code: str, text: str) -> ProtocolMessage:
    return ProtocolMessage(MessageKind.ERROR, session_id, Dict(code=code, text=text))


def _payload_to_wire(kind: MessageKind, payload: Dict) -> dict:
    match kind:
        case MessageKind.STORE_MATRIX:
            return {"dim": payload.dim, "frac_bits": payload.frac_bits,
                    "key_fingerprint": payload.key_fingerprint,
                    "matrix": [[to_hex(v) for v in row] for row in payload.matrix]}
        case MessageKind.MATVEC_REQUEST:
            return {"vector": [to_hex(v) for v in payload.vector]}
        case MessageKind.MATVEC_RESPONSE:
            return {"key_fingerprint": payload.key_fingerprint,
                    "vector": [to_hex(v) for v in payload.vector]}
        case MessageKind.ACK:
            return {}
        case MessageKind.ERROR:
            return {"code": payload.code, "text": payload.text}


def serialize(msg: ProtocolMessage) -> bytes:
    """The full frame: length header and canonical JSON body."""
    body = {"version": msg.version,
            "kind": msg.kind.value,
            "session_id": msg.session_id,
            "payload": _payload_to_wire(msg.kind, msg.payload)}
    if msg.round_index is not None:
        body["round_index"] = msg.round_index
    data = json.dumps(body, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False).encode("utf-8")
    return HEADER.pack(len(data)) + data


def _int(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise FrameError(f"'{name}' must be an integer >= {minimum}, got {value!r}.")
    return value


def _str(value, name: str) -> str:
    if not isinstance(value, str):
        raise FrameError(f"'{name}' must be a string, got {value!r}.")
    return value


def _hex_list(values, name: str) -> list[int]:
    if not isinstance(values, list):
        raise FrameError(f"'{name}' must be a list.")
    try:
        return [from_hex(v) for v in values]
    except HexFormatError as e:
        raise NonCanonicalIntegerError(f"Non-canonical integer in '{name}'.", cause=e)


def _expect_keys(obj: dict, keys: set[str], where: str) -> None:
    if not isinstance(obj, dict) or set(obj) != keys:
        found = sorted(obj) if isinstance(obj, dict) else type(obj).__name__
        raise FrameError(f"{where} must have the keys {sorted(keys)}, got {found}.")


def _payload_from_wire(kind: MessageKind, payload) -> Dict:
    match kind:
        case MessageKind.STORE_MATRIX:
            _expect_keys(payload, {"dim", "frac_bits", "key_fingerprint", "matrix"}, "payload")
            matrix = payload["matrix"]
            if not isinstance(matrix, list):
                raise FrameError("'matrix' must be a list of rows.")
            return Dict(dim=_int(payload["dim"], "dim"),
                        frac_bits=_int(payload["frac_bits"], "frac_bits"),
                        key_fingerprint=_str(payload["key_fingerprint"], "key_fingerprint"),
                        matrix=[_hex_list(row, "matrix") for row in matrix])
        case MessageKind.MATVEC_REQUEST:
            _expect_keys(payload, {"vector"}, "payload")
            return Dict(vector=_hex_list(payload["vector"], "vector"))
        case MessageKind.MATVEC_RESPONSE:
            _expect_keys(payload, {"key_fingerprint", "vector"}, "payload")
            return Dict(key_fingerprint=_str(payload["key_fingerprint"], "key_fingerprint"),
                        vector=_hex_list(payload["vector"], "vector"))
        case MessageKind.ACK:
            _expect_keys(payload, set(), "payload")
            return Dict()
        case MessageKind.ERROR:
            _expect_keys(payload, {"code", "text"}, "payload")
            return Dict(code=_str(payload["code"], "code"), text=_str(payload["text"], "text"))


def frame_length(header: bytes) -> int:
    """Body length announced by a 4-byte header."""
    if len(header) != HEADER.size:
        raise TruncatedFrameError(f"Frame header has {len(header)} of {HEADER.size} bytes.")
    (length,) = HEADER.unpack(header)
    if length > MAX_FRAME_BYTES:
        raise FrameError(f"Frame of {length} bytes exceeds the {MAX_FRAME_BYTES} byte limit.")
    return length


def deserialize(frame: bytes) -> ProtocolMessage:
    """Parse a full frame.

    Raises
    ------
    TruncatedFrameError
        The frame is shorter than its header announces.
    VersionMismatchError
        The body carries a version other than 1.
    NonCanonicalIntegerError
        A hexadecimal integer has uppercase digits or leading zeros.
    FrameError
        Any other malformed header or body.
    """
    length = frame_length(bytes(frame[:HEADER.size]))
    data = bytes(frame[HEADER.size:])
    if len(data) < length:
        raise TruncatedFrameError(f"Frame body has {len(data)} of {length} bytes.")
    if len(data) > length:
        raise FrameError(f"{len(data) - length} trailing bytes after the frame body.")
    try:
        body = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FrameError("The frame body is not valid JSON.", cause=e)
    if not isinstance(body, dict):
        raise FrameError("The frame body must be a JSON object.")
    version = body.get("version")
    if isinstance(version, bool) or version != PROTOCOL_VERSION:
        raise VersionMismatchError(
            f"Unsupported protocol version {version!r}; expected {PROTOCOL_VERSION}.")
    try:
        kind = MessageKind(body.get("kind"))
    except (ValueError, TypeError) as e:
        raise FrameError(f"Unknown message kind {body.get('kind')!r}; expected one of "
                         f"{', '.join(MessageKind.get_all_kinds())}.", cause=e)
    keys = _BODY_KEYS | {"round_index"} if kind.has_round else _BODY_KEYS
    _expect_keys(body, keys, f"A {kind.value} frame")
    round_index = _int(body["round_index"], "round_index") if kind.has_round else None
    return ProtocolMessage(kind, _str(body["session_id"], "session_id"),
                           _payload_from_wire(kind, body["payload"]),
                           round_index=round_index)
