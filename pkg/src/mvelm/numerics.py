"""Dense linear-algebra helpers and a portable seeded RNG.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here only add the shape/definiteness checks the rest of the package relies
on; the heavy lifting is numpy/scipy.

The random generator is SplitMix64 used in counter mode: draw ``i`` from a
generator seeded with ``s`` is ``mix(s + (i + 1) * 0x9E3779B97F4A7C15)``.
Every output depends only on (seed, draw index), so streams are identical
on every platform and numpy version.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg as sla

__all__ = [
    "NumericsError",
    "ShapeError",
    "IndefiniteMatrixError",
    "SeededRng",
    "as_matrix",
    "mat_mul",
    "solve_spd",
    "rand_uniform",
]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


class NumericsError(ValueError):
    """Base class for numerical contract violations."""


class ShapeError(NumericsError):
    """Operand shapes are incompatible."""


class IndefiniteMatrixError(NumericsError):
    """Matrix is singular or not positive definite."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NumericsError(f"{name} contains non-finite entries")
    return m


def mat_mul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def solve_spd(m, b) -> np.ndarray:
    """Solve ``m @ x = b`` for symmetric positive definite ``m`` by Cholesky.

    Raises:
        ShapeError: ``m`` is not square or row counts differ.
        IndefiniteMatrixError: a Cholesky pivot is not positive.
    """
    m = as_matrix(m, "m")
    b_arr = np.asarray(b, dtype=np.float64)
    vector_rhs = b_arr.ndim == 1
    b2 = as_matrix(b_arr, "b")
    if m.shape[0] != m.shape[1]:
        raise ShapeError(f"m must be square, got {m.shape}")
    if m.shape[0] != b2.shape[0]:
        raise ShapeError(f"m is {m.shape[0]}x{m.shape[1]} but b has {b2.shape[0]} rows")
    try:
        factor = sla.cho_factor(m, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise IndefiniteMatrixError(f"matrix is singular/indefinite: {exc}") from None
    x = sla.cho_solve(factor, b2, check_finite=False)
    return x.ravel() if vector_rhs else x


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SeededRng:
    """Counter-based SplitMix64 generator.

    Not thread safe: one owner draws from an instance at a time.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, counter={self.counter})"

    def next_u64(self, n: int) -> np.ndarray:
        """Return the next ``n`` raw 64-bit outputs."""
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.seed) + idx * _GAMMA
            return _splitmix(z)

    def random(self, n: int) -> np.ndarray:
        """``n`` doubles uniform on [0, 1) with 53-bit resolution."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * (2.0**-53)

    def normal(self, n: int) -> np.ndarray:
        """``n`` standard normal draws (Box-Muller, one output per pair)."""
        u = self.random(2 * n).reshape(n, 2)
        radius = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        return radius * np.cos(2.0 * np.pi * u[:, 1])

    def spawn(self, key: int) -> "SeededRng":
        """Derive an independent child generator from (seed, key)."""
        mixed = _splitmix(np.array([self.seed ^ (int(key) * 0xD1B54A32D192ED03 & _MASK64)],
                                   dtype=np.uint64))
        return SeededRng(int(mixed[0]))


def rand_uniform(rng: SeededRng, rows: int, cols: int, lo: float, hi: float) -> np.ndarray:
    if not lo < hi:
        raise ValueError(f"need lo < hi, got lo={lo}, hi={hi}")
    if rows < 0 or cols < 0:
        raise ValueError("rows and cols must be non-negative")
    u = rng.random(rows * cols)
    return (lo + (hi - lo) * u).reshape(rows, cols)
