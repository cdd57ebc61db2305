"""Plaintext dense linear algebra and the local power-iteration oracle.

   Notes:
   ------
       1- The norm of an iterate is its signed dominant component: the
          entry of largest magnitude with its sign kept, lowest index on
          ties. Dividing by it leaves a +1 at that index.
       2- 'local_power_iteration' runs either in floating point or, given
          a FixedPointCodec, in the exact integer arithmetic used by the
          outsourced protocol. Both modes share 'power_step' and
          'iterate_distance' with the client session.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from pyOSEP.config import Dict

if TYPE_CHECKING:
    from pyOSEP.crypto.encoding import FixedPointCodec

log = logging.getLogger(__name__)


class LinalgError(Exception):
    def __init__(self, message: str, cause=None) -> None:
        self.message = message
        self.__cause__ = cause
        super().__init__(self.message)


class DimensionMismatchError(LinalgError):
    pass


class NonFiniteError(LinalgError):
    pass


class ArgumentRangeError(LinalgError, ValueError):
    pass


class ZeroVectorError(LinalgError):
    pass


class ZeroIterateError(ZeroVectorError):
    """A·x^k vanished: the iterate entered the nullspace of A."""


class MatrixFileError(LinalgError):
    pass


@dataclass(frozen=True)
class EigenResult:
    eigenvalue: float
    eigenvector: np.ndarray
    iterations: int
    converged: bool

    def to_dict(self) -> Dict:
        return Dict(eigenvalue=float(self.eigenvalue),
                    eigenvector=[float(v) for v in self.eigenvector],
                    iterations=self.iterations,
                    converged=self.converged)


def as_matrix(A) -> np.ndarray:
    """Validate a square, non-empty, finite matrix and return it as float64."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise DimensionMismatchError(f"Expected a non-empty square matrix, got shape {A.shape}.")
    if not np.all(np.isfinite(A)):
        raise NonFiniteError("Matrix entries must be finite.")
    return A


def as_vector(x, dim: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or (dim is not None and x.shape[0] != dim):
        raise DimensionMismatchError(f"Expected a vector of length {dim}, got shape {x.shape}.")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("Vector components must be finite.")
    return x


def matvec(A, x) -> np.ndarray:
    """A·x for a square A.

    Raises
    ------
    DimensionMismatchError
        len(x) differs from the order of A.
    """
    A = as_matrix(A)
    return A @ as_vector(x, A.shape[0])


def inf_norm_signed(x) -> tuple[float, int]:
    """The component of largest magnitude, sign kept, and its index.

    Raises
    ------
    ZeroVectorError
        All components are zero.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ZeroVectorError("The empty vector has no dominant component.")
    # argmax returns the first occurrence
    index = int(np.argmax(np.abs(x)))
    value = float(x[index])
    if value == 0.0:
        raise ZeroVectorError("The zero vector has no dominant component.")
    return value, index


def signed_normalize(x) -> np.ndarray:
    value, index = inf_norm_signed(x)
    y = np.asarray(x, dtype=float) / value
    y[index] = 1.0
    return y


def power_step(y) -> tuple[np.ndarray, float]:
    """(y / lambda, lambda) with lambda the signed dominant component of y."""
    try:
        lam, index = inf_norm_signed(y)
    except ZeroVectorError as e:
        raise ZeroIterateError("The product A·x vanished.", cause=e)
    x_next = np.asarray(y, dtype=float) / lam
    x_next[index] = 1.0
    return x_next, lam


def iterate_distance(x, x_next) -> float:
    return float(np.max(np.abs(np.asarray(x) - np.asarray(x_next))))


def matrix_inf_norm(A) -> float:
    """max_i sum_j |A_ij|"""
    return float(np.max(np.sum(np.abs(np.asarray(A, dtype=float)), axis=1)))


def residual_norm(A, x, lam: float) -> float:
    """||A·x - lam·x||_inf"""
    x = np.asarray(x, dtype=float)
    return float(np.max(np.abs(matvec(A, x) - lam * x)))


def local_power_iteration(A, x0=None,
                          eps: float = 1e-9,
                          omega: int = 1000,
                          codec: FixedPointCodec | None = None) -> EigenResult:
    """Power iteration on the plaintext matrix.

    Parameters
    ----------
    A : array_like
        Square matrix.
    x0 : array_like, optional
        Nonzero start vector, by default all ones.
    eps : float, optional
        Stop once ||x^k - x^(k+1)||_inf <= eps, by default 1e-9.
    omega : int, optional
        Iteration cap, by default 1000.
    codec : FixedPointCodec, optional
        When given, every product is taken on the level-one fixed-point
        encodings of A and x^k, exactly as the outsourced protocol does.

    Returns
    -------
    EigenResult
        converged is False when omega steps ran without convergence.

    Raises
    ------
    ZeroVectorError
        x0 is the zero vector.
    ZeroIterateError
        A·x^k vanished for some k.
    """
    A = as_matrix(A)
    dim = A.shape[0]
    if eps <= 0 or omega < 1:
        raise ArgumentRangeError(f"Require eps > 0 and omega >= 1, got {eps=}, {omega=}.")
    x = signed_normalize(as_vector(np.ones(dim) if x0 is None else x0, dim))

    if codec is None:
        def product(v):
            return A @ v
    else:
        from pyOSEP.crypto.encoding import fixed_product
        A_int = codec.fixed_matrix(A)

        def product(v):
            y_int = fixed_product(A_int, codec.fixed_vector(v, 1))
            return np.array([codec.from_fixed(y, 2) for y in y_int], dtype=float)

    lam = float("nan")
    for k in range(1, omega + 1):
        x_next, lam = power_step(product(x))
        if iterate_distance(x, x_next) <= eps:
            log.debug(f"Local iteration converged after {k} steps, lambda={lam:.10g}.")
            return EigenResult(lam, x_next, k, True)
        x = x_next
    log.debug(f"Local iteration hit the cap of {omega} steps.")
    return EigenResult(lam, x, omega, False)


def _random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    # sign fix gives the Haar distribution
    return Q * np.sign(np.diag(R))


def make_test_matrix(n: int,
                     dominance: float,
                     rng: np.random.Generator | None = None,
                     basis=None) -> tuple[np.ndarray, float, np.ndarray]:
    """A matrix Q·D·Q^-1 with a planted dominant eigenpair.

    D has |d_1| / max_{i>1} |d_i| = dominance. Q is drawn as U·S·V^T with
    U, V orthogonal and S in [1, 2], so cond(Q) <= 2, unless 'basis' is given.

    Returns
    -------
    (A, lam, v)
        The matrix, the planted dominant eigenvalue and its eigenvector.
    """
    if dominance <= 1:
        raise ArgumentRangeError(f"dominance must exceed 1, got {dominance}.")
    if n < 1:
        raise ArgumentRangeError(f"n must be positive, got {n}.")
    rng = rng if rng is not None else np.random.default_rng()
    d = rng.uniform(-1.0, 1.0, n)
    if n > 1:
        d[1] = rng.choice([-1.0, 1.0])
    d[0] = dominance * rng.choice([-1.0, 1.0])
    if basis is None:
        U = _random_orthogonal(n, rng)
        V = _random_orthogonal(n, rng)
        s = rng.uniform(1.0, 2.0, n)
        Q = (U * s) @ V.T
        Q_inv = (V / s) @ U.T
    else:
        Q = np.asarray(basis, dtype=float)
        Q_inv = np.linalg.inv(Q)
    A = (Q * d) @ Q_inv
    return A, float(d[0]), Q[:, 0].copy()


def load_matrix(path: Path | str) -> np.ndarray:
    """Read the text format: n on the first line, then n rows of n reals.

    Raises
    ------
    MatrixFileError
        On unreadable files, bad numbers, wrong shapes or non-finite entries.
    """
    path = Path(path)
    try:
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
        if not lines:
            raise MatrixFileError(f"'{path}' is empty.")
        n = int(lines[0])
        rows = [[float(v) for v in line.split()] for line in lines[1:]]
    except (OSError, ValueError, UnicodeDecodeError) as e:
        raise MatrixFileError(f"Cannot read a matrix from '{path}'.", cause=e)
    if n < 1 or len(rows) != n or any(len(row) != n for row in rows):
        raise MatrixFileError(f"'{path}' does not hold {n} rows of {n} values.")
    try:
        return as_matrix(rows)
    except LinalgError as e:
        raise MatrixFileError(f"'{path}' holds an invalid matrix.", cause=e)


def save_matrix(path: Path | str, A) -> Path:
    A = as_matrix(A)
    path = Path(path)
    rows = [" ".join(repr(float(v)) for v in row) for row in A]
    path.write_text("\n".join([str(A.shape[0])] + rows) + "\n", encoding="utf-8")
    return path
