import numpy as np
import pytest

from csgrad import rng
from csgrad.sketch import (CountSketchParams, SketchTable, cs_combine, cs_compress,
                           cs_compress_sparse, cs_estimate, cs_reconstruct, hash_functions)
from csgrad.signal import SparseSignal

M = (1 << 64) - 1
G = 0x9E3779B97F4A7C15


def _fmix(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M
    return z ^ (z >> 31)


def _replay_hash(seed, i, j, c):
    h = 0
    for w in (rng.SKETCH, seed, i, j):
        h = _fmix(h ^ _fmix((w + G) & M))
    return (h >> 32) % c, (1.0 if h & 1 == 0 else -1.0)


def test_hashes_replay_documented_stream():
    P = CountSketchParams(rows=3, cols=37, seed=123, dim=50)
    buckets, signs = hash_functions(P)
    for i in range(3):
        for j in range(50):
            assert (buckets[i, j], signs[i, j]) == _replay_hash(123, i, j, 37)


def test_zero_signal():
    P = CountSketchParams(4, 10, 0, 30)
    assert not np.any(cs_compress(np.zeros(30), P).table)
    assert cs_reconstruct(SketchTable(P, np.zeros((4, 10))), 3).nnz == 0


def test_single_spike_cell():
    P = CountSketchParams(rows=1, cols=8, seed=5, dim=4)
    x = np.zeros(4)
    x[2] = 5.0
    table = cs_compress(x, P).table
    bucket, sign = _replay_hash(5, 0, 2, 8)
    expected = np.zeros((1, 8))
    expected[0, bucket] = 5.0 * sign
    assert np.array_equal(table, expected)


def test_linearity(rs):
    P = CountSketchParams(5, 40, 9, 200)
    u, v = rs.standard_normal((2, 200))
    a, b = 0.7, -2.2
    lhs = cs_compress(a * u + b * v, P).table
    rhs = a * cs_compress(u, P).table + b * cs_compress(v, P).table
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_sparse_compress_matches_dense(rs):
    P = CountSketchParams(4, 16, 2, 64)
    s = SparseSignal.from_dense(np.where(rs.random(64) < 0.2, rs.standard_normal(64), 0.0))
    assert np.array_equal(cs_compress_sparse(s, P).table, cs_compress(s.densify(), P).table)


def test_determinism(rs):
    P = CountSketchParams(16, 500, 77, 4096)
    x = rs.standard_normal(4096)
    assert cs_compress(x, P).table.tobytes() == cs_compress(x.copy(), P).table.tobytes()


class TestCombine:
    def test_identity(self, rs):
        P = CountSketchParams(3, 11, 0, 20)
        t = cs_compress(rs.standard_normal(20), P)
        assert np.array_equal(cs_combine([t], [1.0]).table, t.table)

    def test_two_equal(self, rs):
        P = CountSketchParams(3, 11, 0, 20)
        t = cs_compress(rs.standard_normal(20), P)
        assert np.allclose(cs_combine([t, t], [0.5, 0.5]).table, t.table, rtol=0, atol=1e-15)

    def test_average(self, rs):
        P = CountSketchParams(5, 30, 4, 100)
        xs = rs.standard_normal((3, 100))
        combined = cs_combine([cs_compress(x, P) for x in xs], [1 / 3] * 3).table
        assert np.max(np.abs(combined - cs_compress(xs.mean(axis=0), P).table)) <= 1e-12

    def test_mismatched_params(self):
        a = SketchTable(CountSketchParams(2, 3, 0, 5), np.zeros((2, 3)))
        b = SketchTable(CountSketchParams(2, 3, 1, 5), np.zeros((2, 3)))
        with pytest.raises(ValueError):
            cs_combine([a, b], [1.0, 1.0])


class TestReconstruct:
    def test_spike_exact_without_collisions(self):
        d, j = 16, 6
        for seed in range(100):
            P = CountSketchParams(rows=5, cols=64, seed=seed, dim=d)
            buckets, _ = hash_functions(P)
            # no other coordinate may share the spike's bucket in any row
            if all(np.sum(buckets[i] == buckets[i, j]) == 1 for i in range(5)):
                break
        else:
            pytest.fail("no collision-free seed found")
        x = np.zeros(d)
        x[j] = 5.0
        est = cs_reconstruct(cs_compress(x, P), 1)
        assert est.entries() == [(j, 5.0)]

    def test_even_rows_median_is_mean_of_middle(self):
        # spike 5 at j; coordinate k (amplitude 0.5) collides with j in row 0
        # only, with matching sign product: row views {5.5, 5} -> 5.25
        d, j = 16, 3
        for seed in range(10_000):
            P = CountSketchParams(rows=2, cols=8, seed=seed, dim=d)
            b, s = hash_functions(P)
            partners = [k for k in range(d) if k != j and b[0, k] == b[0, j]
                        and s[0, k] == s[0, j] and b[1, k] != b[1, j]]
            if partners and all(np.sum(b[i] == b[i, j]) == 1 + (i == 0) for i in range(2)):
                k = partners[0]
                break
        else:
            pytest.fail("no seed with the required collision pattern")
        x = np.zeros(d)
        x[j], x[k] = 5.0, 0.5
        assert cs_estimate(cs_compress(x, P))[j] == 5.25

    def test_k0_rejected(self):
        with pytest.raises(ValueError):
            cs_reconstruct(SketchTable(CountSketchParams(1, 2, 0, 3), np.zeros((1, 2))), 0)

    def test_unbiased(self):
        d, n_seeds = 256, 10_000
        x = np.random.default_rng(31).standard_normal(d)
        errs = np.empty((n_seeds, d))
        for seed in range(n_seeds):
            P = CountSketchParams(rows=1, cols=32, seed=seed, dim=d)
            errs[seed] = cs_estimate(cs_compress(x, P)) - x
        bound = 4 * errs.std(axis=0, ddof=1) / np.sqrt(n_seeds)
        assert np.all(np.abs(errs.mean(axis=0)) <= bound)
