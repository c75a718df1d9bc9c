"""Subsampled orthogonal sensing matrices.

Phi is Q distinct rows of a d_aug x d_aug orthogonal base matrix (WHT or
DCT) scaled by sqrt(d_aug/Q), where d_aug = 2**ceil(log2 d). Signals of
dimension d are zero-padded to d_aug before the transform and results of
the adjoint are truncated back to d. Only the row indices are stored.

Binary format (little-endian), 16-byte header followed by the rows::

    offset  size  field
    0       1     base kind (0 = WHT, 1 = DCT)
    1       1     reserved, must be 0
    2       2     format version (u16, currently 1)
    4       4     d (u32)
    8       4     Q (u32)
    12      4     low 32 bits of the generation seed (u32)
    16      4*Q   row indices in increasing order (u32 each)
"""
from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass

import numpy as np

from . import rng
from .transform import BaseTransformKind, DCT_MAX_DIM, dct_reference, fwht, next_pow2

FORMAT_VERSION = 1
_HEADER = struct.Struct("<BBHIII")


@functools.lru_cache(maxsize=8)
def _dct_cached(d: int) -> np.ndarray:
    B = dct_reference(d)
    B.setflags(write=False)
    return B


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    base: BaseTransformKind
    d: int
    rows: np.ndarray
    seed: int = 0

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int64)
        object.__setattr__(self, "base", BaseTransformKind(self.base))
        if self.d < 1:
            raise ValueError("d must be positive")
        d_aug = next_pow2(self.d)
        if rows.ndim != 1 or not 1 <= rows.size <= d_aug:
            raise ValueError(f"need 1 <= Q <= d_aug={d_aug} rows, got {rows.size}")
        if rows[0] < 0 or rows[-1] >= d_aug or np.any(np.diff(rows) <= 0):
            raise ValueError("rows must be distinct, sorted and inside [0, d_aug)")
        if self.base is BaseTransformKind.DCT and d_aug > DCT_MAX_DIM:
            raise ValueError(f"DCT sensing limited to d_aug <= {DCT_MAX_DIM}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def d_aug(self) -> int:
        return next_pow2(self.d)

    @property
    def Q(self) -> int:
        return int(self.rows.size)

    @property
    def scale(self) -> float:
        return math.sqrt(self.d_aug / self.Q)

    def __eq__(self, other):
        # the seed is provenance only; two matrices are equal as operators
        if not isinstance(other, SensingMatrix):
            return NotImplemented
        return (self.base == other.base and self.d == other.d
                and np.array_equal(self.rows, other.rows))

    def __repr__(self):
        return (f"SensingMatrix(base={self.base.name}, d={self.d}, "
                f"d_aug={self.d_aug}, Q={self.Q}, seed={self.seed})")

    # augmented-space products (dimension d_aug in, d_aug out)
    def _forward_full(self, u: np.ndarray) -> np.ndarray:
        if self.base is BaseTransformKind.WHT:
            return fwht(u)
        return u @ _dct_cached(self.d_aug).T

    def _inverse_full(self, u: np.ndarray) -> np.ndarray:
        if self.base is BaseTransformKind.WHT:
            return fwht(u)
        return u @ _dct_cached(self.d_aug)

    def apply_augmented(self, u) -> np.ndarray:
        """Phi u for u in R^{d_aug} (or stacked along the last axis)."""
        u = np.asarray(u, dtype=np.float64)
        if u.shape[-1] != self.d_aug:
            raise ValueError(f"expected dimension {self.d_aug}, got {u.shape[-1]}")
        return self.scale * self._forward_full(u)[..., self.rows]

    def adjoint_augmented(self, v) -> np.ndarray:
        """Phi^T v in R^{d_aug}, without truncation."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.Q:
            raise ValueError(f"expected measurement of length {self.Q}, got {v.shape[-1]}")
        full = np.zeros(v.shape[:-1] + (self.d_aug,))
        full[..., self.rows] = v
        return self.scale * self._inverse_full(full)

    def dense(self) -> np.ndarray:
        """Explicit Q x d matrix (small sizes only)."""
        return self.adjoint_augmented(np.eye(self.Q))[..., : self.d]


def generate(base, d: int, Q: int, seed: int) -> SensingMatrix:
    """Pick Q distinct rows uniformly from [0, d_aug).

    Partial Fisher-Yates driven by ``rng.SplitMix64(rng.mix(rng.MATRIX, seed))``:
    for k = 0..Q-1, swap position k with k + below(d_aug - k).
    """
    base = BaseTransformKind(base)
    d_aug = next_pow2(d)
    if not 1 <= Q <= d_aug:
        raise ValueError(f"Q must lie in [1, d_aug={d_aug}], got {Q}")
    stream = rng.SplitMix64(rng.mix(rng.MATRIX, seed))
    perm = {}  # sparse Fisher-Yates: only displaced positions are stored
    picked = np.empty(Q, dtype=np.int64)
    for k in range(Q):
        j = k + stream.below(d_aug - k)
        picked[k] = perm.get(j, j)
        perm[j] = perm.get(k, k)
    return SensingMatrix(base, d, np.sort(picked), seed)


def apply(phi: SensingMatrix, u) -> np.ndarray:
    """Measurement Phi u of a dimension-d signal (pad, transform, gather, scale)."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape[-1] != phi.d:
        raise ValueError(f"dimension mismatch: Phi has d={phi.d}, signal has {u.shape[-1]}")
    if phi.d != phi.d_aug:
        padded = np.zeros(u.shape[:-1] + (phi.d_aug,))
        padded[..., : phi.d] = u
        u = padded
    return phi.apply_augmented(u)


def adjoint(phi: SensingMatrix, v) -> np.ndarray:
    """Phi^T v truncated to dimension d."""
    out = phi.adjoint_augmented(v)
    return out[..., : phi.d] if phi.d != phi.d_aug else out


def serialize(phi: SensingMatrix) -> bytes:
    header = _HEADER.pack(int(phi.base), 0, FORMAT_VERSION, phi.d, phi.Q,
                          phi.seed & 0xFFFFFFFF)
    return header + phi.rows.astype("<u4").tobytes()


def deserialize(payload: bytes) -> SensingMatrix:
    if len(payload) < _HEADER.size:
        raise ValueError("sensing payload too short for header")
    base, reserved, version, d, Q, seed = _HEADER.unpack_from(payload)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported sensing format version {version}")
    if reserved != 0:
        raise ValueError("reserved header byte must be zero")
    try:
        base = BaseTransformKind(base)
    except ValueError:
        raise ValueError(f"unknown base transform kind {base}") from None
    if d < 1 or Q < 1:
        raise ValueError("d and Q must be positive")
    if len(payload) != _HEADER.size + 4 * Q:
        raise ValueError(f"expected {_HEADER.size + 4 * Q} bytes, got {len(payload)}")
    rows = np.frombuffer(payload, dtype="<u4", offset=_HEADER.size).astype(np.int64)
    try:
        return SensingMatrix(base, d, rows, seed)
    except ValueError as exc:
        raise ValueError(f"invalid sensing payload: {exc}") from None
