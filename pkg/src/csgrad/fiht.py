"""Fast Iterative Hard Thresholding (FIHT).

Accelerated hard thresholding with an extrapolation step and exact
line-search step sizes. All products with Phi go through the fast
``sensing.apply`` / ``sensing.adjoint`` routines.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import sensing
from .sensing import SensingMatrix
from .signal import SparseSignal, principal_support, project


class StopReason(enum.Enum):
    MAX_ITERS = "MaxIters"
    SMALL_NORM = "SmallNorm"
    STALLED = "Stalled"


@dataclass(frozen=True)
class FihtParams:
    K: int
    max_iters: int = 25
    residual_tol: float = 1e-4
    stall_window: int = 4
    stall_rel_std: float = 0.01

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.max_iters < 1 or self.stall_window < 1:
            raise ValueError("max_iters and stall_window must be positive")
        if self.residual_tol < 0 or self.stall_rel_std < 0:
            raise ValueError("tolerances must be nonnegative")


@dataclass
class FihtResult:
    estimate: SparseSignal
    iterations_used: int
    stop_reason: StopReason
    # ||y - Phi g(s)||_2 for s = 1, 2, ..., final
    residual_norms: list = field(default_factory=list)
    # ||w(s)||_2 for s = 0, 1, ...
    w_norms: list = field(default_factory=list)


def _ratio(num: float, den: float) -> float:
    # zero search direction means a fixed point; take no step
    return num / den if den > 0.0 else 0.0


# Below this relative size g(s) - g(s-1) is rounding noise, and the
# extrapolation ratio would amplify it by ~1/eps.
MOMENTUM_RTOL = 1e-12


def fiht(y, phi: SensingMatrix, params: FihtParams) -> FihtResult:
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (phi.Q,):
        raise ValueError(f"measurement must have length Q={phi.Q}, got {y.shape}")
    if params.K > phi.d:
        raise ValueError(f"K={params.K} exceeds signal dimension {phi.d}")
    K = params.K
    A = lambda v: sensing.apply(phi, v)  # noqa: E731
    At = lambda v: sensing.adjoint(phi, v)  # noqa: E731

    w = At(y)
    omega = principal_support(w, K)
    g_prev = np.zeros(phi.d)
    g = project(w, omega)
    Ag_prev = np.zeros(phi.Q)
    Ag = A(g)

    w_norm0 = float(np.linalg.norm(w))
    result = FihtResult(SparseSignal.zeros(phi.d), 0, StopReason.MAX_ITERS,
                        [float(np.linalg.norm(y - Ag))], [w_norm0])
    if w_norm0 <= params.residual_tol:
        result.estimate = SparseSignal.from_dense(g)
        result.stop_reason = StopReason.SMALL_NORM
        return result

    history = []  # ||w(s)|| for s >= 1
    s = 1
    while True:
        if s == 1:
            tau = 0.0
        else:
            step = Ag - Ag_prev  # Phi (g(s) - g(s-1))
            ss = float(np.dot(step, step))
            if ss <= (MOMENTUM_RTOL * float(np.linalg.norm(Ag))) ** 2:
                ss = 0.0
            tau = _ratio(float(np.dot(y - Ag, step)), ss)
        w = g + tau * (g - g_prev)
        Aw = Ag + tau * (Ag - Ag_prev)
        rw = At(y - Aw)
        gamma = np.flatnonzero(w)
        prw = project(rw, gamma)
        alpha_t = _ratio(float(np.dot(prw, prw)), float(np.sum(A(prw) ** 2)))
        h = w + alpha_t * rw
        omega = principal_support(h, K)
        g_tilde = project(h, omega)
        Ag_tilde = A(g_tilde)
        r = At(y - Ag_tilde)
        pr = project(r, omega)
        Apr = A(pr)
        alpha = _ratio(float(np.dot(pr, pr)), float(np.dot(Apr, Apr)))

        g_prev, Ag_prev = g, Ag
        g = g_tilde + alpha * pr
        Ag = Ag_tilde + alpha * Apr
        s += 1

        wn = float(np.linalg.norm(w))
        history.append(wn)
        result.w_norms.append(wn)
        result.residual_norms.append(float(np.linalg.norm(y - Ag)))
        result.iterations_used = s - 1

        if wn <= params.residual_tol:
            result.stop_reason = StopReason.SMALL_NORM
            break
        if len(history) >= params.stall_window:
            recent = np.array(history[-params.stall_window:])
            if np.std(recent) <= params.stall_rel_std * np.mean(recent):
                result.stop_reason = StopReason.STALLED
                break
        if s > params.max_iters:
            result.stop_reason = StopReason.MAX_ITERS
            break

    result.estimate = SparseSignal.from_dense(g)
    return result


def reconstruct(y, phi: SensingMatrix, K: int) -> SparseSignal:
    """A(y; Phi): FIHT with default parameters, estimate only."""
    return fiht(y, phi, FihtParams(K=K)).estimate
