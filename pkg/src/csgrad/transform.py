"""Orthonormal base transforms: fast Walsh-Hadamard and a dense DCT reference."""
from __future__ import annotations

import enum
import math

import numba
import numpy as np

INV_SQRT2 = 1.0 / math.sqrt(2.0)
DCT_MAX_DIM = 4096


class BaseTransformKind(enum.IntEnum):
    WHT = 0
    DCT = 1


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(d: int) -> int:
    """2**ceil(log2 d)."""
    if d < 1:
        raise ValueError("dimension must be positive")
    return 1 << (d - 1).bit_length()


@numba.njit(cache=True, nogil=True)
def _fwht_rows(x):
    # in place on a C-contiguous (rows, d) array; fixed operation order
    n, d = x.shape
    for r in range(n):
        h = 1
        while h < d:
            for i in range(0, d, 2 * h):
                for j in range(i, i + h):
                    a = x[r, j]
                    b = x[r, j + h]
                    x[r, j] = (a + b) * INV_SQRT2
                    x[r, j + h] = (a - b) * INV_SQRT2
            h *= 2


def fwht(x) -> np.ndarray:
    """Orthonormal Walsh-Hadamard transform along the last axis.

    Computes H^(k) x with H^(k) = [[H, H], [H, -H]] / sqrt(2) (Sylvester
    order) by iterative butterflies. The 1/sqrt(2) factor is applied at
    every stage, so each stage is itself orthonormal. Accepts stacked
    inputs of shape (..., d); each row is transformed with the same
    sequence of operations as a lone vector.
    """
    x = np.array(x, dtype=np.float64, order="C")
    d = x.shape[-1]
    if not is_pow2(d):
        raise ValueError(f"fwht needs a power-of-2 dimension, got {d}")
    _fwht_rows(x.reshape(-1, d))
    return x


def hadamard_dense(d: int) -> np.ndarray:
    """Dense H^(log2 d) built by the recursive block definition."""
    if not is_pow2(d):
        raise ValueError(f"Hadamard matrix needs a power-of-2 dimension, got {d}")
    H = np.ones((1, 1))
    while H.shape[0] < d:
        H = np.block([[H, H], [H, -H]]) * INV_SQRT2
    return H


def dct_reference(d: int) -> np.ndarray:
    """Orthogonal DCT-II matrix,
    B_ij = sqrt(2/d) / sqrt(1 + [i == 1]) * cos(pi (i-1)(2j-1) / (2d)), 1-based.
    """
    if d < 1:
        raise ValueError("dimension must be positive")
    if d > DCT_MAX_DIM:
        raise ValueError(f"dense DCT limited to d <= {DCT_MAX_DIM}, got {d}")
    i = np.arange(d)[:, None]
    j = np.arange(1, d + 1)[None, :]
    B = math.sqrt(2.0 / d) * np.cos(math.pi * i * (2 * j - 1) / (2 * d))
    B[0, :] *= INV_SQRT2
    return B


def pad_to_pow2(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[-1]
    d_aug = next_pow2(d)
    if d_aug == d:
        return x.copy()
    out = np.zeros(x.shape[:-1] + (d_aug,))
    out[..., :d] = x
    return out


def truncate(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if d < 1 or d > x.shape[-1]:
        raise ValueError(f"cannot truncate dimension {x.shape[-1]} to {d}")
    return x[..., :d].copy()
