"""Synthetic diagonal-quadratic problem family and reconstruction test signals.

Device i holds f_i(x) = 1/2 (x - x0)^T A_i (x - x0) with diagonal A_i; the
device-average A has A_jj = exp(-j/300) + 0.001 (j 1-based). Stochastic
gradients are

    g_i(x) = A_i (x - x0) + R1 * A u1 + R2 * (b * u2),

u1, u2 standard normal and b Bernoulli(p_b). Only the entries of u2 where
b = 1 matter, so the spike term is drawn sparsely: u1 (d normals), then
the spike count ~ Binomial(d, p_b), then the spike positions (uniform
without replacement), then their standard-normal amplitudes. This has
the same distribution as drawing b and u2 in full.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng as _rng
from .signal import as_dense

R1_DEFAULT = 12.5
R2_DEFAULT = 50.0
PB_DEFAULT = 1.5e-3


def mean_spectrum(d: int) -> np.ndarray:
    return np.exp(-np.arange(1, d + 1) / 300.0) + 0.001


@dataclass(frozen=True, eq=False)
class SyntheticProblem:
    d: int
    n: int
    x0: np.ndarray
    a_diag: np.ndarray  # (n, d)
    a_mean: np.ndarray  # (d,)
    R1: float = R1_DEFAULT
    R2: float = R2_DEFAULT
    p_b: float = PB_DEFAULT

    # GradientOracle interface used by fedopt
    @property
    def dim(self) -> int:
        return self.d

    def sample_gradient(self, i: int, x, rng: np.random.Generator) -> np.ndarray:
        return grad_oracle(self, i, x, rng)

    def objective(self, x) -> float:
        return objective(self, x)

    def exact_gradient(self, x) -> np.ndarray:
        return exact_gradient(self, x)


def make_problem(d: int, n: int, seed: int, *, R1: float = R1_DEFAULT,
                 R2: float = R2_DEFAULT, p_b: float = PB_DEFAULT) -> SyntheticProblem:
    if d < 1 or n < 1:
        raise ValueError("d and n must be at least 1")
    gen = _rng.generator(_rng.PROBLEM, seed)
    mu = mean_spectrum(d)
    z = gen.standard_normal((n, d))
    # centering realizes covariance I - 11^T/n per coordinate
    dev = z - z.mean(axis=0)
    a_diag = mu + dev
    # remove the O(eps) residue the centering leaves so the column mean is mu
    a_diag -= a_diag.mean(axis=0) - mu
    x0 = gen.standard_normal(d)
    return SyntheticProblem(d, n, x0, a_diag, mu, R1, R2, p_b)


def objective(problem: SyntheticProblem, x) -> float:
    diff = as_dense(x, problem.d) - problem.x0
    return 0.5 * float(np.dot(diff * problem.a_mean, diff))


def exact_gradient(problem: SyntheticProblem, x) -> np.ndarray:
    return problem.a_mean * (as_dense(x, problem.d) - problem.x0)


def grad_oracle(problem: SyntheticProblem, i: int, x, rng: np.random.Generator) -> np.ndarray:
    if not 0 <= i < problem.n:
        raise IndexError(f"device index {i} out of range")
    diff = as_dense(x, problem.d) - problem.x0
    d = problem.d
    u1 = rng.standard_normal(d)
    g = problem.a_diag[i] * diff + problem.R1 * problem.a_mean * u1
    n_spikes = rng.binomial(d, problem.p_b) if problem.p_b > 0 else 0
    if n_spikes:
        pos = rng.choice(d, size=n_spikes, replace=False)
        g[pos] += problem.R2 * rng.standard_normal(n_spikes)
    return g


def make_recon_signal(d: int, k_nnz: int, sigma_n: float, rng: np.random.Generator) -> np.ndarray:
    """k_nnz standard-normal spikes at uniform positions plus N(0, sigma_n^2) noise."""
    if not 0 <= k_nnz <= d:
        raise ValueError("k_nnz must lie in [0, d]")
    g = np.zeros(d)
    support = rng.choice(d, size=k_nnz, replace=False)
    g[support] = rng.standard_normal(k_nnz)
    if sigma_n > 0:
        g += sigma_n * rng.standard_normal(d)
    return g
