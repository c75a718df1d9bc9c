"""Distributed SGD with compressed-sensing uplinks and server-side error feedback.

Round t of ``run_cs_sgd``:

    devices:  y_i = Phi g_i(x(t))                     (stateless)
    server:   y~  = mean_i y_i + w(t),  w ~ N(0, W^2 I_Q)
              z   = eta * y~ + eps(t)
              D   = FIHT(z; Phi, K)
              x(t+1) = x(t) - D,   eps(t+1) = z - Phi D

Random streams are keyed from the run seed: device i in round t draws
from ``rng.generator(GRADIENT, seed, i, t)`` and the channel noise from
``rng.generator(CHANNEL, seed, t)`` (or ``channel_seed`` when set). The three engines share these
streams, so gradient draws match round for round across algorithms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from . import fiht, rng, sensing, sketch
from .sensing import SensingMatrix
from .signal import SparseSignal, sparsity_level


class GradientOracle(Protocol):
    dim: int
    n: int

    def sample_gradient(self, i: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    def objective(self, x: np.ndarray) -> float: ...

    def exact_gradient(self, x: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class ChannelModel:
    noise_std: float = 0.0

    def __post_init__(self):
        if not self.noise_std >= 0:
            raise ValueError("noise_std must be nonnegative")

    @property
    def kind(self) -> str:
        return "None" if self.noise_std == 0 else "IidGaussian"

    def sample(self, size: int, gen: np.random.Generator) -> np.ndarray:
        # draw even when W = 0 so the stream layout does not depend on W
        return self.noise_std * gen.standard_normal(size)


@dataclass(frozen=True)
class RunConfig:
    T: int
    K: int = 1
    eta: float | None = None
    channel: ChannelModel = ChannelModel()
    seed: int = 0
    diagnostic: bool = False
    channel_seed: int | None = None  # defaults to seed
    keep_iterates: bool = False  # store x(1), ..., x(T+1) on the trace
    # test hooks
    device_order: Sequence[int] | None = None
    corrupt_feedback: tuple[int, float] | None = None

    @property
    def step_size(self) -> float:
        if self.eta is not None:
            return self.eta
        return 1.0 / math.sqrt(self.T) if self.T > 0 else 1.0

    def channel_gen(self, t: int) -> np.random.Generator:
        key = self.seed if self.channel_seed is None else self.channel_seed
        return rng.generator(rng.CHANNEL, key, t)


@dataclass
class ServerState:
    x: np.ndarray
    eps: np.ndarray
    eta: float
    t: int = 1


@dataclass
class MetricsRecord:
    t: int
    f_value: float
    grad_norm: float
    sp_g: float | None
    sp_p: float | None
    delta_nnz: int
    feedback_norm: float
    recon_residual: float


@dataclass
class ShadowState:
    """Virtual error-feedback sequence. ``e`` and ``p`` live in the padded space R^{d_aug}."""

    e: np.ndarray
    p: np.ndarray
    x_tilde: np.ndarray


@dataclass
class DiagnosticRecord:
    t: int
    eps_identity: float      # ||eps - Phi e|| / (1 + ||eps||)
    z_identity: float        # ||z - (Phi p + eta w)|| / (1 + ||z||)
    shadow_identity: float   # ||(x - e) - x_tilde||_inf, x_tilde(t+1) = x_tilde(t) - eta g(t)
    shadow_identity_noise: float  # same, recursion includes -(eta Q/d_aug) Phi^T w


@dataclass
class RunTrace:
    records: list = field(default_factory=list)
    x_final: np.ndarray | None = None
    f_final: float = float("nan")
    diagnostics: list = field(default_factory=list)
    downlink_bytes: int = 0
    iterates: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


def _sp(v: np.ndarray) -> float | None:
    return sparsity_level(v) if np.any(v) else None


def _device_gradients(oracle, x, seed: int, t: int, order) -> list[np.ndarray]:
    grads: list = [None] * oracle.n
    for i in (range(oracle.n) if order is None else order):
        grads[i] = oracle.sample_gradient(i, x, rng.generator(rng.GRADIENT, seed, i, t))
    if any(g is None for g in grads):
        raise ValueError("device_order must visit every device exactly once")
    return grads


def device_step(i: int, x, phi: SensingMatrix, oracle, gen: np.random.Generator) -> np.ndarray:
    """y_i = Phi g_i(x). Devices keep no state between rounds."""
    return sensing.apply(phi, oracle.sample_gradient(i, x, gen))


def _noisy_mean(ys: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.mean(ys, axis=0) + w


def aggregate(ys, channel: ChannelModel, gen: np.random.Generator) -> np.ndarray:
    """Mean of the uploads plus a single channel-noise vector."""
    ys = [np.asarray(y, dtype=np.float64) for y in ys]
    if not ys:
        raise ValueError("no measurements to aggregate")
    if any(y.shape != ys[0].shape or y.ndim != 1 for y in ys):
        raise ValueError("measurement dimension mismatch")
    return _noisy_mean(np.stack(ys), channel.sample(ys[0].shape[0], gen))


def server_step(state: ServerState, y_tilde, phi: SensingMatrix, K: int,
                reconstructor: Callable = fiht.reconstruct):
    """Error-feedback update; returns (Delta, next state)."""
    y_tilde = np.asarray(y_tilde, dtype=np.float64)
    if y_tilde.shape != state.eps.shape:
        raise ValueError("measurement dimension mismatch")
    z = state.eta * y_tilde + state.eps
    delta = reconstructor(z, phi, K)
    new_eps = z - sensing.apply(phi, delta.densify())
    nxt = ServerState(state.x - delta.densify(), new_eps, state.eta, state.t + 1)
    return delta, nxt


def shadow_update(shadow: ShadowState, g, delta: SparseSignal, w, phi: SensingMatrix,
                  eta: float) -> ShadowState:
    """p = eta g + e;  e' = p - Delta + (eta Q / d_aug) Phi^T w;  x~' = x~ - eta g."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (phi.d,) or delta.dim != phi.d:
        raise ValueError("dimension mismatch")
    d_aug = phi.d_aug
    p = shadow.e.copy()
    p[: phi.d] += eta * g
    e = p.copy()
    e[: phi.d] -= delta.densify()
    e += (eta * phi.Q / d_aug) * phi.adjoint_augmented(w)
    return ShadowState(e=e, p=p, x_tilde=shadow.x_tilde - eta * g)


def _pad(v: np.ndarray, d_aug: int) -> np.ndarray:
    if v.shape[0] == d_aug:
        return v
    out = np.zeros(d_aug)
    out[: v.shape[0]] = v
    return out


def run_cs_sgd(problem, phi: SensingMatrix, config: RunConfig, x_init=None) -> RunTrace:
    d = problem.dim
    if phi.d != d:
        raise ValueError(f"Phi is built for d={phi.d}, problem has d={d}")
    eta = config.step_size
    x = np.zeros(d) if x_init is None else np.array(x_init, dtype=np.float64)
    state = ServerState(x, np.zeros(phi.Q), eta, 1)
    d_aug = phi.d_aug
    shadow = ShadowState(np.zeros(d_aug), np.zeros(d_aug), x.copy())
    x_hat = x.copy()  # x_tilde with the channel-noise term kept
    trace = RunTrace()

    for t in range(1, config.T + 1):
        grads = np.stack(_device_gradients(problem, state.x, config.seed, t,
                                           config.device_order))
        # one batched transform; row i is bitwise what device i would send
        ys = sensing.apply(phi, grads)
        g_mean = np.mean(grads, axis=0)
        w = config.channel.sample(phi.Q, config.channel_gen(t))
        y_tilde = _noisy_mean(ys, w)

        z = state.eta * y_tilde + state.eps
        delta, nxt = server_step(state, y_tilde, phi, config.K)
        if config.corrupt_feedback is not None and config.corrupt_feedback[0] == t:
            nxt.eps = nxt.eps.copy()
            nxt.eps[0] += config.corrupt_feedback[1]

        p = shadow.e.copy()
        p[:d] += eta * g_mean
        if config.diagnostic:
            eps_res = np.linalg.norm(state.eps - phi.apply_augmented(shadow.e))
            z_res = np.linalg.norm(z - (phi.apply_augmented(p) + eta * w))
            xe = state.x - shadow.e[:d]
            trace.diagnostics.append(DiagnosticRecord(
                t,
                float(eps_res / (1.0 + np.linalg.norm(state.eps))),
                float(z_res / (1.0 + np.linalg.norm(z))),
                float(np.max(np.abs(xe - shadow.x_tilde))),
                float(np.max(np.abs(xe - x_hat))),
            ))
            x_hat = x_hat - eta * g_mean - (eta * phi.Q / d_aug) * phi.adjoint_augmented(w)[:d]

        trace.records.append(MetricsRecord(
            t=t,
            f_value=problem.objective(state.x),
            grad_norm=float(np.linalg.norm(problem.exact_gradient(state.x))),
            sp_g=_sp(g_mean),
            sp_p=_sp(p[:d]),
            delta_nnz=delta.nnz,
            feedback_norm=float(np.linalg.norm(state.eps)),
            recon_residual=float(np.linalg.norm(z - sensing.apply(phi, delta.densify()))),
        ))
        trace.downlink_bytes += 12 * delta.nnz
        shadow = shadow_update(shadow, g_mean, delta, w, phi, eta)
        if config.keep_iterates:
            trace.iterates.append(state.x)
        state = nxt

    trace.x_final = state.x
    if config.keep_iterates:
        trace.iterates.append(state.x)
    trace.f_final = problem.objective(state.x)
    return trace


def run_vanilla_sgd(problem, config: RunConfig, x_init=None) -> RunTrace:
    d = problem.dim
    eta = config.step_size
    x = np.zeros(d) if x_init is None else np.array(x_init, dtype=np.float64)
    trace = RunTrace()
    for t in range(1, config.T + 1):
        grads = _device_gradients(problem, x, config.seed, t, config.device_order)
        g_mean = np.mean(np.stack(grads), axis=0)
        step = eta * g_mean
        sp_g = _sp(g_mean)
        trace.records.append(MetricsRecord(
            t=t,
            f_value=problem.objective(x),
            grad_norm=float(np.linalg.norm(problem.exact_gradient(x))),
            sp_g=sp_g,
            sp_p=sp_g,  # p(t) = eta g(t): no compression error to feed back
            delta_nnz=int(np.count_nonzero(step)),
            feedback_norm=0.0,
            recon_residual=0.0,
        ))
        trace.downlink_bytes += 12 * int(np.count_nonzero(step))
        if config.keep_iterates:
            trace.iterates.append(x)
        x = x - step
    trace.x_final = x
    if config.keep_iterates:
        trace.iterates.append(x)
    trace.f_final = problem.objective(x)
    return trace


def run_sketch_sgd(problem, params: sketch.CountSketchParams, config: RunConfig,
                   x_init=None) -> RunTrace:
    """Same loop with count sketches; feedback lives in the flattened sketch domain."""
    d = problem.dim
    if params.dim != d:
        raise ValueError("sketch params dimension does not match the problem")
    eta = config.step_size
    x = np.zeros(d) if x_init is None else np.array(x_init, dtype=np.float64)
    rc = params.rows * params.cols
    eps = np.zeros((params.rows, params.cols))
    trace = RunTrace()
    for t in range(1, config.T + 1):
        grads = _device_gradients(problem, x, config.seed, t, config.device_order)
        tables = sketch.cs_compress_many(grads, params)
        combined = sketch.cs_combine(tables, [1.0 / problem.n] * problem.n)
        w = config.channel.sample(rc, config.channel_gen(t))
        z = eta * (combined.table + w.reshape(params.rows, params.cols)) + eps
        delta = sketch.cs_reconstruct(sketch.SketchTable(params, z), config.K)
        new_eps = z - sketch.cs_compress_sparse(delta, params).table
        g_mean = np.mean(np.stack(grads), axis=0)
        trace.records.append(MetricsRecord(
            t=t,
            f_value=problem.objective(x),
            grad_norm=float(np.linalg.norm(problem.exact_gradient(x))),
            sp_g=_sp(g_mean),
            sp_p=None,  # no coordinate-space shadow for a non-orthogonal sketch
            delta_nnz=delta.nnz,
            feedback_norm=float(np.linalg.norm(eps)),
            recon_residual=float(np.linalg.norm(new_eps)),
        ))
        trace.downlink_bytes += 12 * delta.nnz
        if config.keep_iterates:
            trace.iterates.append(x)
        x = x - delta.densify()
        eps = new_eps
    trace.x_final = x
    if config.keep_iterates:
        trace.iterates.append(x)
    trace.f_final = problem.objective(x)
    return trace
