"""Count sketch compressor and heavy-hitter reconstructor.

Row i hashes coordinate j with v = mix(SKETCH, seed, i, j) (see ``rng``):
bucket h_i(j) = (v >> 32) mod c, sign s_i(j) = +1 if bit 0 of v is 0
else -1.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from . import rng
from .signal import SparseSignal, as_dense, best_k


@dataclass(frozen=True)
class CountSketchParams:
    rows: int
    cols: int
    seed: int
    dim: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.dim < 1:
            raise ValueError("sketch rows, cols and dim must be positive")


@functools.lru_cache(maxsize=16)
def _hashes(params: CountSketchParams) -> tuple[np.ndarray, np.ndarray]:
    j = np.arange(params.dim, dtype=np.uint64)
    buckets = np.empty((params.rows, params.dim), dtype=np.int64)
    signs = np.empty((params.rows, params.dim))
    for i in range(params.rows):
        v = rng.mix_array(rng.mix(rng.SKETCH, params.seed, i), j)
        buckets[i] = ((v >> np.uint64(32)) % np.uint64(params.cols)).astype(np.int64)
        signs[i] = 1.0 - 2.0 * (v & np.uint64(1)).astype(np.float64)
    buckets.setflags(write=False)
    signs.setflags(write=False)
    return buckets, signs


@functools.lru_cache(maxsize=16)
def _operator(params: CountSketchParams) -> scipy.sparse.csr_matrix:
    """The sketch as a sparse (rows*cols) x dim matrix with one +-1 per row block."""
    buckets, signs = _hashes(params)
    r, c, d = params.rows, params.cols, params.dim
    flat_rows = (buckets + (np.arange(r) * c)[:, None]).reshape(-1)
    cols = np.tile(np.arange(d), r)
    return scipy.sparse.csr_matrix((signs.reshape(-1), (flat_rows, cols)), shape=(r * c, d))


def hash_functions(params: CountSketchParams) -> tuple[np.ndarray, np.ndarray]:
    """(buckets, signs), each of shape (rows, dim)."""
    return _hashes(params)


@dataclass(frozen=True, eq=False)
class SketchTable:
    params: CountSketchParams
    table: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.shape != (self.params.rows, self.params.cols):
            raise ValueError(f"table shape {t.shape} does not match params")
        object.__setattr__(self, "table", t)

    def flat(self) -> np.ndarray:
        return self.table.reshape(-1)


def cs_compress(x, params: CountSketchParams) -> SketchTable:
    """table[i, h_i(j)] += s_i(j) * x_j for every row i and coordinate j."""
    x = as_dense(x, params.dim)
    table = _operator(params) @ x
    return SketchTable(params, table.reshape(params.rows, params.cols))


def cs_compress_many(xs, params: CountSketchParams) -> list[SketchTable]:
    """Sketch each row of an (m, dim) stack; row k equals ``cs_compress(xs[k])``."""
    xs = np.asarray(xs, dtype=np.float64)
    op = _operator(params)
    return [SketchTable(params, (op @ x).reshape(params.rows, params.cols)) for x in xs]


def cs_compress_sparse(x: SparseSignal, params: CountSketchParams) -> SketchTable:
    if x.dim != params.dim:
        raise ValueError("dimension mismatch")
    return cs_compress(x.densify(), params)


def cs_combine(tables, weights) -> SketchTable:
    tables = list(tables)
    weights = list(weights)
    if not tables or len(tables) != len(weights):
        raise ValueError("need one weight per table and at least one table")
    params = tables[0].params
    if any(t.params != params for t in tables):
        raise ValueError("cannot combine sketches with different params")
    out = np.zeros((params.rows, params.cols))
    for t, w in zip(tables, weights):
        out += w * t.table
    return SketchTable(params, out)


def cs_estimate(table: SketchTable) -> np.ndarray:
    """Median over rows of s_i(j) * table[i, h_i(j)] for every coordinate."""
    buckets, signs = _hashes(table.params)
    views = np.sort(signs * np.take_along_axis(table.table, buckets, axis=1), axis=0)
    r = views.shape[0]
    if r % 2:
        return views[r // 2]
    # even row counts: mean of the two middle order statistics
    return 0.5 * (views[r // 2 - 1] + views[r // 2])


def cs_reconstruct(table: SketchTable, K: int) -> SparseSignal:
    if K < 1:
        raise ValueError("K must be at least 1")
    return best_k(cs_estimate(table), K)
