"""Dense float64 matrices and the project-wide random number generator.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64.  The helpers
here add the shape checks the rest of the package relies on, plus a
Gauss-Jordan inverse with partial pivoting.

Randomness goes through :class:`Rng`, a thin wrapper over numpy's PCG64 bit
generator.  PCG64 output for a given seed is fixed across platforms and numpy
versions, so seeded runs reproduce.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

SINGULAR_PIVOT = 1e-12


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class SingularMatrixError(ArithmeticError):
    """Gauss-Jordan met a pivot below the singularity threshold."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a C-contiguous float64 2-D array with at least one row and column."""
    m = np.ascontiguousarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    return a @ b


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=np.float64)


def invert(m) -> np.ndarray:
    """Inverse of a square matrix by Gauss-Jordan elimination with partial pivoting.

    Raises :class:`SingularMatrixError` when the best available pivot has
    magnitude below 1e-12.
    """
    m = as_matrix(m)
    n, cols = m.shape
    if n != cols:
        raise ShapeError(f"cannot invert non-square {n}x{cols} matrix")
    aug = np.hstack([m, np.eye(n)])
    for col in range(n):
        pivot_row = col + int(np.argmax(np.abs(aug[col:, col])))
        pivot = aug[pivot_row, col]
        if abs(pivot) < SINGULAR_PIVOT:
            raise SingularMatrixError(f"matrix is singular (pivot {pivot:.3g} in column {col})")
        if pivot_row != col:
            aug[[col, pivot_row]] = aug[[pivot_row, col]]
        aug[col] /= pivot
        factors = aug[:, col].copy()
        factors[col] = 0.0
        aug -= np.outer(factors, aug[col])
    return aug[:, n:].copy()


class Rng:
    """Seeded generator (PCG64).  Single owner; use :meth:`derive` for independent streams."""

    def __init__(self, seed: int = 0):
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._spawn_key: tuple[int, ...] = ()
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def derive(self, *keys: int) -> Rng:
        """Child generator whose stream depends only on this seed and ``keys``."""
        child = Rng.__new__(Rng)
        child.seed = self.seed
        child._spawn_key = self._spawn_key + tuple(int(k) for k in keys)
        seq = np.random.SeedSequence(self.seed, spawn_key=child._spawn_key)
        child.generator = np.random.Generator(np.random.PCG64(seq))
        return child

    def uniform(self, lo: float, hi: float, size=None):
        if not lo < hi:
            raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
        return self.generator.uniform(lo, hi, size)

    def shuffle(self, items: Sequence) -> list:
        """Fisher-Yates shuffle; returns a new list and leaves ``items`` untouched."""
        out = list(items)
        for i in range(len(out) - 1, 0, -1):
            j = int(self.generator.integers(0, i + 1))
            out[i], out[j] = out[j], out[i]
        return out

    def choice_without_replacement(self, n: int, s: int) -> np.ndarray:
        """Uniform ``s``-subset of ``range(n)``, sorted ascending."""
        if s > n:
            raise ValueError(f"cannot draw {s} distinct items from {n}")
        if s < 0:
            raise ValueError(f"sample size must be non-negative, got {s}")
        picked = self.generator.choice(n, size=s, replace=False)
        return np.sort(picked).astype(np.intp)
