"""Paillier public-key cryptosystem with the generator fixed to g = n + 1.

   Notes:
   ------
       1- Keys and ciphertexts are immutable values. Every operation that
          needs randomness takes the caller's rng (a 'random.Random'
          compatible object); the default is 'secrets.SystemRandom()'.
       2- Only 'decrypt' needs a PrivateKey. The homomorphic operations
          take the PublicKey alone, so the worker never holds the secret.
       3- Integers are serialised as lowercase hexadecimal strings without
          leading zeros ('0' for zero), both in key files and on the wire.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import secrets
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import gmpy2

from pyOSEP.config import Configurable, Dict

log = logging.getLogger(__name__)

DEFAULT_KEYSIZE = 2048
MIN_KEYSIZE = 16
PRIMALITY_ROUNDS = 40

_HEX = re.compile(r"0|[1-9a-f][0-9a-f]*")


class PaillierError(Exception):
    def __init__(self, message: str, cause=None) -> None:
        self.message = message
        self.__cause__ = cause
        super().__init__(self.message)


class KeyGenerationError(PaillierError):
    pass


class PrimeSearchError(KeyGenerationError):
    pass


class InvalidKeyError(PaillierError):
    pass


class PlaintextRangeError(PaillierError):
    pass


class KeyMismatchError(PaillierError):
    pass


class InvalidCiphertextError(PaillierError):
    pass


class HexFormatError(PaillierError, ValueError):
    pass


class KeyFileError(PaillierError):
    pass


def to_hex(value: int) -> str:
    if value < 0:
        raise HexFormatError(f"Negative integers have no wire form: {value}.")
    return format(int(value), "x")


def from_hex(text: str) -> int:
    if not isinstance(text, str) or _HEX.fullmatch(text) is None:
        raise HexFormatError(f"'{text}' is not a canonical lowercase hexadecimal integer.")
    return int(text, 16)


@dataclass(frozen=True)
class PublicKey:
    n: int
    g: int | None = None
    n_squared: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 15 or n % 2 == 0:
            raise InvalidKeyError(f"The modulus must be an odd composite, got {n}.")
        n_squared = n * n
        g = n + 1 if self.g is None else int(self.g)
        if g % n_squared != (n + 1) % n_squared:
            raise InvalidKeyError("Only the generator g = n + 1 is supported.")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "n_squared", n_squared)

    @cached_property
    def fingerprint(self) -> str:
        """A collision-resistant tag of the modulus."""
        return hashlib.sha256(to_hex(self.n).encode("ascii")).hexdigest()[:32]

    @property
    def bits(self) -> int:
        return self.n.bit_length()

    def random_unit(self, rng=None) -> int:
        """Uniform r in [1, n) with gcd(r, n) = 1."""
        rng = rng or secrets.SystemRandom()
        while True:
            r = rng.randrange(1, self.n)
            if gmpy2.gcd(r, self.n) == 1:
                return r

    def to_dict(self) -> Dict:
        return Dict(kind="paillier-public", n=to_hex(self.n), g=to_hex(self.g))

    def __repr__(self):
        return f"<PublicKey {self.bits} bits {self.fingerprint[:10]}>"


@dataclass(frozen=True)
class PrivateKey:
    p: int
    q: int
    lam: int = field(init=False, repr=False)
    mu: int = field(init=False, repr=False)

    def __post_init__(self):
        p, q = int(self.p), int(self.q)
        if p == q:
            raise InvalidKeyError("The prime factors must differ.")
        if not (gmpy2.is_prime(p, PRIMALITY_ROUNDS) and gmpy2.is_prime(q, PRIMALITY_ROUNDS)):
            raise InvalidKeyError("Both factors must be prime.")
        if gmpy2.gcd(p * q, (p - 1) * (q - 1)) != 1:
            raise InvalidKeyError("gcd(pq, (p-1)(q-1)) must be 1.")
        n = p * q
        lam = int(gmpy2.lcm(p - 1, q - 1))
        # with g = n + 1, L(g^lambda mod n^2) = lambda mod n
        mu = int(gmpy2.invert(lam % n, n))
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self) -> int:
        return self.p * self.q

    @cached_property
    def public_key(self) -> PublicKey:
        return PublicKey(self.n)

    def to_dict(self) -> Dict:
        pk = self.public_key
        return Dict(kind="paillier-private",
                    n=to_hex(pk.n), g=to_hex(pk.g),
                    p=to_hex(self.p), q=to_hex(self.q),
                    lam=to_hex(self.lam), mu=to_hex(self.mu))

    def __repr__(self):
        return f"<PrivateKey of {self.public_key!r}>"


@dataclass(frozen=True)
class Ciphertext:
    value: int
    key_fingerprint: str


class PaillierKeypair(NamedTuple):
    public_key: PublicKey
    private_key: PrivateKey


def _random_prime(bits: int, rng, budget: int) -> int:
    for _ in range(budget):
        # top two bits set so that the product has exactly 2 * bits bits
        candidate = rng.getrandbits(bits) | (0b11 << (bits - 2)) | 1
        if gmpy2.is_prime(candidate, PRIMALITY_ROUNDS):
            return int(candidate)
    raise PrimeSearchError(f"No {bits}-bit prime found in {budget} attempts.")


def keygen(bits: int = DEFAULT_KEYSIZE, rng=None) -> PaillierKeypair:
    """Generate a Paillier keypair.

    Parameters
    ----------
    bits : int, optional
        Bit length of the modulus n, by default 2048.
    rng : random.Random, optional
        Randomness source, by default secrets.SystemRandom().

    Returns
    -------
    PaillierKeypair
        (public_key, private_key), unpackable as a tuple.

    Raises
    ------
    KeyGenerationError
        On a key size below 16 bits, or when no valid distinct pair of
        primes is found within 10 * bits attempts.
    """
    if bits < MIN_KEYSIZE:
        raise KeyGenerationError(f"Key size must be at least {MIN_KEYSIZE} bits, got {bits}.")
    rng = rng or secrets.SystemRandom()
    budget = 10 * bits
    p_bits = bits // 2
    q_bits = bits - p_bits
    p = _random_prime(p_bits, rng, budget)
    for _ in range(budget):
        q = _random_prime(q_bits, rng, budget)
        if q != p and gmpy2.gcd(p * q, (p - 1) * (q - 1)) == 1:
            break
    else:
        raise KeyGenerationError(f"No second prime distinct from p in {budget} attempts.")
    private_key = PrivateKey(p, q)
    public_key = private_key.public_key
    log.info(f"Generated {public_key!r}.")
    return PaillierKeypair(public_key, private_key)


def _check_key(pk: PublicKey, c: Ciphertext) -> None:
    if c.key_fingerprint != pk.fingerprint:
        raise KeyMismatchError(
            f"Ciphertext was produced under key {c.key_fingerprint[:10]}, "
            f"not {pk.fingerprint[:10]}.")
    if not 0 < c.value < pk.n_squared:
        raise InvalidCiphertextError("Ciphertext lies outside (0, n^2).")


def _check_unit(pk: PublicKey, c: Ciphertext) -> None:
    _check_key(pk, c)
    if gmpy2.gcd(c.value, pk.n) != 1:
        raise InvalidCiphertextError("Ciphertext is not a unit of Z_{n^2}.")


def encrypt(pk: PublicKey, m: int, r: int | None = None, rng=None) -> Ciphertext:
    """c = g^m * r^n mod n^2.

    'r' is only meant for deterministic test vectors; otherwise a fresh
    unit of Z_n is drawn from 'rng'.
    """
    if not 0 <= m < pk.n:
        raise PlaintextRangeError(f"Plaintext must lie in [0, n), got {m}.")
    if r is None:
        r = pk.random_unit(rng)
    elif not 0 < r < pk.n or gmpy2.gcd(r, pk.n) != 1:
        raise PlaintextRangeError("The explicit randomness must be a unit of Z_n.")
    n, n_squared = pk.n, pk.n_squared
    # g^m = (1 + n)^m = 1 + m * n (mod n^2)
    value = (1 + m * n) % n_squared * gmpy2.powmod(r, n, n_squared) % n_squared
    return Ciphertext(int(value), pk.fingerprint)


def decrypt(sk: PrivateKey, pk: PublicKey, c: Ciphertext) -> int:
    """m = L(c^lambda mod n^2) * mu mod n, with L(u) = (u - 1) / n."""
    if sk.n != pk.n:
        raise KeyMismatchError("The private key does not belong to the public key.")
    _check_unit(pk, c)
    u = gmpy2.powmod(c.value, sk.lam, pk.n_squared)
    return int((u - 1) // pk.n * sk.mu % pk.n)


def add_cipher(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    """E(m1) * E(m2) decrypts to m1 + m2 mod n."""
    _check_key(pk, c1)
    _check_key(pk, c2)
    return Ciphertext(c1.value * c2.value % pk.n_squared, pk.fingerprint)


def add_plain(pk: PublicKey, c: Ciphertext, m2: int) -> Ciphertext:
    """E(m1) * g^m2 decrypts to m1 + m2 mod n."""
    _check_key(pk, c)
    shift = (1 + (m2 % pk.n) * pk.n) % pk.n_squared
    return Ciphertext(c.value * shift % pk.n_squared, pk.fingerprint)


def scalar_mul(pk: PublicKey, c: Ciphertext, k: int) -> Ciphertext:
    """E(m)^k decrypts to k * m mod n."""
    _check_key(pk, c)
    if not 0 <= k < pk.n:
        raise PlaintextRangeError(f"Scalar must lie in [0, n), got {k}.")
    return Ciphertext(int(gmpy2.powmod(c.value, k, pk.n_squared)), pk.fingerprint)


class _KeyFileWriter(Configurable):
    """Creates key files; private ones are owner-only from the first byte on POSIX."""

    def __init__(self, path: Path, content: Dict, private: bool) -> None:
        self.path = path
        self.content = content
        self.private = private
        self.mode = 0o644
        self.restrict_existing = False

    def write(self):
        self._set_config()
        fd = os.open(self.path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, self.mode)
        # the creation mode does not apply to a file that is being overwritten
        if self.restrict_existing:
            os.fchmod(fd, self.mode)
        with os.fdopen(fd, "w") as f:
            json.dump(self.content, f, indent=4, sort_keys=True)

    def _restrict(self):
        if self.private:
            self.mode = 0o600
            self.restrict_existing = True

    def on_linux_config(self):
        self._restrict()

    def on_darwin_config(self):
        self._restrict()

    def on_windows_config(self):
        log.debug(f"Permissions of '{self.path}' left to the platform defaults.")


def save_key(path: Path | str, key: PublicKey | PrivateKey, force: bool = False) -> Path:
    """Write a key file; private key files are made owner-only where possible.

    Raises
    ------
    KeyFileError
        The file exists and 'force' is False.
    """
    path = Path(path)
    if path.exists() and not force:
        raise KeyFileError(f"'{path}' exists; refusing to overwrite it.")
    path.parent.mkdir(parents=True, exist_ok=True)
    _KeyFileWriter(path, key.to_dict(), isinstance(key, PrivateKey)).write()
    return path


def load_key(path: Path | str) -> PublicKey | PrivateKey:
    path = Path(path)
    try:
        with open(path, "r") as f:
            data = Dict(json.load(f))
        match data.kind:
            case "paillier-public":
                return PublicKey(from_hex(data.n), from_hex(data.g))
            case "paillier-private":
                sk = PrivateKey(from_hex(data.p), from_hex(data.q))
                if (sk.n != from_hex(data.n) or sk.lam != from_hex(data.lam)
                        or sk.mu != from_hex(data.mu)):
                    raise KeyFileError(f"'{path}' holds inconsistent private parameters.")
                return sk
            case _:
                raise KeyFileError(f"'{path}' is not a Paillier key file.")
    except (OSError, ValueError, TypeError, InvalidKeyError) as e:
        raise KeyFileError(f"Cannot read the key file '{path}'.", cause=e)


def load_public_key(path: Path | str) -> PublicKey:
    """Load a key file that must not contain private parameters."""
    key = load_key(path)
    if not isinstance(key, PublicKey):
        raise KeyFileError(f"'{path}' contains private parameters; pass the public key file.")
    return key


def load_private_key(path: Path | str) -> PrivateKey:
    key = load_key(path)
    if not isinstance(key, PrivateKey):
        raise KeyFileError(f"'{path}' holds no private key.")
    return key
