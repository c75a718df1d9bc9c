"""Dense and sparse real vectors plus the top-K primitives used by FIHT.

Dense signals are plain 1-D ``float64`` numpy arrays. Top-K selection
breaks magnitude ties by the lowest index, so every selection here is
deterministic regardless of the sort implementation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def as_dense(x, dim: int | None = None) -> np.ndarray:
    """Validate and convert to a 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"dimension mismatch: expected {dim}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("signal contains non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class SparseSignal:
    """``dim``-dimensional vector stored as sorted (index, value) pairs."""

    dim: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-D of equal length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim:
                raise IndexError("sparse index out of range")
            if np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing")
        if not np.all(np.isfinite(val)):
            raise ValueError("sparse values must be finite")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def zeros(cls, dim: int) -> "SparseSignal":
        return cls(dim, np.empty(0, np.int64), np.empty(0))

    @classmethod
    def from_dense(cls, x) -> "SparseSignal":
        """Keep the nonzero entries of ``x``."""
        x = as_dense(x)
        idx = np.flatnonzero(x)
        return cls(x.shape[0], idx, x[idx])

    @property
    def nnz(self) -> int:
        return int(np.count_nonzero(self.values))

    def densify(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out

    def entries(self) -> list[tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]

    def __eq__(self, other):
        if not isinstance(other, SparseSignal):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return f"SparseSignal(dim={self.dim}, entries={self.entries()})"


def sparsity_level(x) -> float:
    """sp(x) = ||x||_1^2 / (||x||_2^2 * d), in [1/d, 1] for nonzero x."""
    x = as_dense(x)
    # rescale first so the squares cannot overflow or underflow
    peak = np.max(np.abs(x)) if x.size else 0.0
    if peak == 0.0:
        raise ValueError("sp undefined at 0")
    y = x / peak
    l1 = np.sum(np.abs(y))
    return float(l1 * l1 / (np.dot(y, y) * x.shape[0]))


def principal_support(x, K: int) -> np.ndarray:
    """Sorted indices of the K largest-magnitude entries (lowest index wins ties)."""
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    if K < 0:
        raise ValueError("K must be nonnegative")
    if K >= d:
        return np.arange(d)
    if K == 0:
        return np.empty(0, dtype=np.int64)
    mag = np.abs(x)
    kth = np.partition(mag, d - K)[d - K]
    above = np.flatnonzero(mag > kth)
    ties = np.flatnonzero(mag == kth)[: K - above.size]
    return np.sort(np.concatenate([above, ties]))


def best_k(x, K: int) -> SparseSignal:
    """Best K-term approximation; zero entries are never selected."""
    if K < 1:
        raise ValueError("K must be at least 1")
    x = as_dense(x)
    supp = principal_support(x, K)
    supp = supp[x[supp] != 0.0]
    return SparseSignal(x.shape[0], supp, x[supp])


def project(x, S) -> np.ndarray:
    """Keep the entries of ``x`` indexed by ``S``; zero elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    S = np.asarray(S, dtype=np.int64)
    if S.size and (S.min() < 0 or S.max() >= x.shape[0]):
        raise IndexError("support index out of range")
    out = np.zeros_like(x)
    out[S] = x[S]
    return out


def complement(S, d: int) -> np.ndarray:
    mask = np.ones(d, dtype=bool)
    mask[np.asarray(S, dtype=np.int64)] = False
    return np.flatnonzero(mask)
