import numpy as np
import pytest

from csgrad import fiht, rng, sensing, synth
from csgrad.fiht import FihtParams, StopReason
from csgrad.transform import BaseTransformKind as Base


def planted_spikes(d, k, seed):
    x = np.zeros(d)
    x[rng.generator(99, seed).choice(d, k, replace=False)] = 1.0
    return x


def test_params_defaults():
    p = FihtParams(K=3)
    assert (p.max_iters, p.residual_tol, p.stall_window, p.stall_rel_std) == (25, 1e-4, 4, 0.01)
    with pytest.raises(ValueError):
        FihtParams(K=0)


def test_zero_measurement():
    phi = sensing.generate(Base.WHT, 64, 16, 0)
    res = fiht.fiht(np.zeros(16), phi, FihtParams(K=4))
    assert res.stop_reason is StopReason.SMALL_NORM
    assert res.estimate.nnz == 0 and res.iterations_used == 0


def test_noiseless_recovery_seed0():
    phi = sensing.generate(Base.WHT, 1024, 256, 0)
    x = planted_spikes(1024, 10, 0)
    res = fiht.fiht(sensing.apply(phi, x), phi, FihtParams(K=10))
    err = np.linalg.norm(res.estimate.densify() - x) / np.linalg.norm(x)
    assert err <= 1e-6
    assert res.residual_norms[-1] <= res.residual_norms[0]


def test_full_measurements_two_iterations(rs):
    # Q = d_aug, K = d: g(1) = Phi^T y = x already; two iterations keep it
    phi = sensing.generate(Base.WHT, 16, 16, 1)
    for _ in range(5):
        x = rs.standard_normal(16)
        res = fiht.fiht(sensing.apply(phi, x), phi, FihtParams(K=16, max_iters=2))
        assert res.iterations_used <= 2
        assert np.max(np.abs(res.estimate.densify() - x)) <= 1e-12


def test_output_sparsity_and_finiteness(rs):
    phi = sensing.generate(Base.WHT, 500, 120, 3)
    for K in (1, 5, 40):
        y = rs.standard_normal(120) * 10.0
        res = fiht.fiht(y, phi, FihtParams(K=K))
        assert res.estimate.nnz <= K
        assert np.all(np.isfinite(res.estimate.values))
        assert res.iterations_used <= 25


def test_degenerate_directions_stay_finite():
    # y in the range of a single column: search directions vanish quickly
    phi = sensing.generate(Base.WHT, 32, 32, 0)
    x = np.zeros(32)
    x[5] = 2.0
    res = fiht.fiht(sensing.apply(phi, x), phi, FihtParams(K=1))
    assert np.all(np.isfinite(res.estimate.values))
    assert np.allclose(res.estimate.densify(), x, atol=1e-12)


def test_stall_needs_full_window():
    phi = sensing.generate(Base.WHT, 1024, 256, 0)
    x = planted_spikes(1024, 10, 4)
    res = fiht.fiht(sensing.apply(phi, x), phi, FihtParams(K=10))
    if res.stop_reason is StopReason.STALLED:
        assert res.iterations_used >= 4


def test_max_iters_respected(rs):
    phi = sensing.generate(Base.WHT, 256, 64, 2)
    res = fiht.fiht(rs.standard_normal(64), phi,
                    FihtParams(K=30, max_iters=3, stall_rel_std=0.0))
    assert res.iterations_used == 3 and res.stop_reason is StopReason.MAX_ITERS


def test_deterministic(rs):
    phi = sensing.generate(Base.WHT, 300, 80, 5)
    y = rs.standard_normal(80)
    a = fiht.fiht(y, phi, FihtParams(K=12))
    b = fiht.fiht(y, phi, FihtParams(K=12))
    assert a.estimate == b.estimate


def test_dimension_errors():
    phi = sensing.generate(Base.WHT, 64, 16, 0)
    with pytest.raises(ValueError):
        fiht.fiht(np.zeros(17), phi, FihtParams(K=2))
    with pytest.raises(ValueError):
        fiht.fiht(np.zeros(16), phi, FihtParams(K=65))


class TestReconstruct:
    def test_wrapper_matches_fiht(self, rs):
        phi = sensing.generate(Base.WHT, 1024, 256, 0)
        y = sensing.apply(phi, planted_spikes(1024, 10, 0)) + 0.01 * rs.standard_normal(256)
        assert fiht.reconstruct(y, phi, 10) == fiht.fiht(y, phi, FihtParams(K=10)).estimate

    def test_zero(self):
        phi = sensing.generate(Base.WHT, 64, 16, 0)
        assert fiht.reconstruct(np.zeros(16), phi, 3).nnz == 0

    def test_recovery(self):
        phi = sensing.generate(Base.WHT, 1024, 256, 0)
        x = planted_spikes(1024, 10, 0)
        est = fiht.reconstruct(sensing.apply(phi, x), phi, 10).densify()
        assert np.linalg.norm(est - x) / np.linalg.norm(x) <= 1e-6

    def test_k0_rejected(self):
        phi = sensing.generate(Base.WHT, 64, 16, 0)
        with pytest.raises(ValueError):
            fiht.reconstruct(np.zeros(16), phi, 0)


@pytest.mark.parametrize("seed", [0, 1, 8, 25, 26, 38])
def test_full_measurements_stay_at_best_k(seed):
    # iterates differ only by rounding here; extrapolation must not amplify it
    d, K = 1024, 30
    phi = sensing.generate(Base.WHT, d, d, seed)
    g = synth.make_recon_signal(d, K, 0.05, np.random.default_rng(seed))
    est = fiht.fiht(sensing.apply(phi, g), phi, FihtParams(K=K)).estimate.densify()
    best = np.argsort(-np.abs(g), kind="stable")[:K]
    assert set(np.flatnonzero(est)) == set(best)
    assert np.max(np.abs(est[best] - g[best])) <= 1e-12
