"""Oracle-side cost and gradient of the steady-state output-prediction error.

For a stabilizing gain L with closed loop A_L = A - L H, the steady cost is

    J(L) = tr(X H^T H),    X = A_L X A_L^T + Q + L R L^T,

its gradient is assembled from the two Lyapunov solutions

    grad J(L) = 2 Y (L R - A_L X H^T),    Y = A_L^T Y A_L + H^T H,

and the finite-horizon truncation replaces the series for X with its partial
sum plus the initial-covariance term. `duality_check` cross-validates the
Monte-Carlo prediction error against the deterministic adjoint (time-reversed
LQR) evaluation of the same quantity.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InstabilityError, NumericalError
from .filtering import GainMatrix, fixed_gain_predict
from .linalg import solve_discrete_lyapunov
from .model import NoiseConfig, SystemModel, simulate
from .seeding import derive_seed

__all__ = [
    "CostReport",
    "steady_cost",
    "cost_gradient",
    "cost_report",
    "truncated_cost",
    "truncated_cost_gradient",
    "duality_check",
    "pairwise_mean",
]


@dataclass(frozen=True)
class CostReport:
    J: float
    X: np.ndarray
    Y: np.ndarray
    grad: np.ndarray


def _closed_loop(model: SystemModel, L):
    if isinstance(L, GainMatrix):
        gain = L
    else:
        gain = GainMatrix.create(model.A, model.H, L)
    return gain


def _require_stable(gain: GainMatrix):
    if not gain.is_stabilizing:
        raise InstabilityError(
            f"gain is not stabilizing (rho={gain.rho:.6f}); steady cost diverges"
        )


def cost_report(model: SystemModel, L) -> CostReport:
    gain = _closed_loop(model, L)
    _require_stable(gain)
    A_L, Lm = gain.closed_loop, gain.L
    W = model.Q + Lm @ model.R @ Lm.T
    X = solve_discrete_lyapunov(A_L, W)
    HtH = model.H.T @ model.H
    Y = solve_discrete_lyapunov(A_L.T, HtH)
    J = float(np.trace(X @ HtH))
    grad = 2.0 * Y @ (Lm @ model.R - A_L @ X @ model.H.T)
    return CostReport(J=J, X=X, Y=Y, grad=grad)


def steady_cost(model: SystemModel, L) -> float:
    gain = _closed_loop(model, L)
    _require_stable(gain)
    W = model.Q + gain.L @ model.R @ gain.L.T
    X = solve_discrete_lyapunov(gain.closed_loop, W)
    return float(np.trace(X @ model.H.T @ model.H))


def cost_gradient(model: SystemModel, L) -> np.ndarray:
    return cost_report(model, L).grad


def truncated_cost(model: SystemModel, L, T: int, include_noise_floor=False) -> float:
    """Finite-horizon expected squared prediction error (optionally plus tr R).

    Evaluates tr(X_T H^T H) with
    X_T = A_L^T P0 (A_L^T)^T + sum_{t<T} A_L^t (Q + L R L^T) (A_L^T)^t
    exactly; no stability requirement.
    """
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    gain = _closed_loop(model, L)
    A_L, Lm = gain.closed_loop, gain.L
    W = model.Q + Lm @ model.R @ Lm.T
    X = np.zeros_like(model.Q)
    P = np.eye(model.n)
    for _ in range(T):
        X = X + P @ W @ P.T
        P = P @ A_L
    X = X + P @ model.P0 @ P.T  # P = A_L^T here
    value = float(np.trace(X @ model.H.T @ model.H))
    if include_noise_floor:
        value += float(np.trace(model.R))
    return value


def truncated_cost_gradient(model: SystemModel, L, T: int) -> np.ndarray:
    """Exact gradient of the finite-horizon cost, via cached powers of A_L."""
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    gain = _closed_loop(model, L)
    A_L, Lm, H = gain.closed_loop, gain.L, model.H
    HtH = H.T @ H
    W = model.Q + Lm @ model.R @ Lm.T

    powers = [np.eye(model.n)]
    for _ in range(T):
        powers.append(powers[-1] @ A_L)

    # G_k = (A_L^T)^{k-1} H^T H A_L^{k-1}, running partial sum for the LR term
    Y_T = sum(powers[t].T @ HtH @ powers[t] for t in range(T))
    grad = 2.0 * Y_T @ Lm @ model.R

    # - 2 sum_{k=1}^{T-1} (A_L^T)^{k-1} H^T H A_L^k S_k H^T,
    #   S_k = sum_{j=0}^{T-1-k} A_L^j W (A_L^T)^j
    S = np.zeros_like(W)
    for k in range(T - 1, 0, -1):
        j = T - 1 - k
        S = S + powers[j] @ W @ powers[j].T
        grad -= 2.0 * powers[k - 1].T @ HtH @ powers[k] @ S @ H.T

    # - 2 sum_{k=1}^{T} (A_L^T)^{k-1} H^T H A_L^T_power P0 (A_L^T)^{T-k} H^T
    for k in range(1, T + 1):
        grad -= 2.0 * powers[k - 1].T @ HtH @ powers[T] @ model.P0 @ powers[T - k].T @ H.T
    return grad


def pairwise_mean(values: np.ndarray) -> np.ndarray:
    """Mean with an index-ascending pairwise reduction tree, so the result is
    identical however the work is split across workers."""
    total = _pairwise_sum(values, 0, len(values))
    return total / len(values)


def _pairwise_sum(values, lo, hi):
    if hi - lo == 1:
        return values[lo]
    mid = (lo + hi) // 2
    return _pairwise_sum(values, lo, mid) + _pairwise_sum(values, mid, hi)


def adjoint_cost(model: SystemModel, L, T: int, a: np.ndarray) -> float:
    """Quadratic cost of the time-reversed closed-loop adjoint run from z(T)=a.

    The adjoint state follows z(t) = A_L^T z(t+1) under the feedback
    u(t) = L^T z(t); the cost is z(0)^T P0 z(0) + sum_{t=1}^{T}
    [z(t)^T Q z(t) + u(t)^T R u(t)].
    """
    gain = _closed_loop(model, L)
    z = np.asarray(a, dtype=float).reshape(-1)
    ALt = gain.closed_loop.T
    Lt = gain.L.T
    total = 0.0
    for _ in range(T, 0, -1):
        u = Lt @ z
        total += float(z @ model.Q @ z + u @ model.R @ u)
        z = ALt @ z
    total += float(z @ model.P0 @ z)
    return total


def duality_check(model: SystemModel, L, T: int, mc_samples: int, seed: int,
                  noise: NoiseConfig | None = None) -> dict:
    """Cross-validate the prediction error against its adjoint evaluation.

    lhs: Monte-Carlo mean of ||y(T) - yhat_L(T)||^2 over fresh trajectories.
    rhs: sum over output rows of the closed-form adjoint quadratic cost,
         plus tr R. The rhs is also checked (to 1e-10) against the
         truncated-cost evaluation, which is the same quantity assembled a
         second way.
    """
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    if mc_samples < 1:
        raise DomainError(f"mc_samples must be >= 1, got {mc_samples}")
    gain = _closed_loop(model, L)

    per_row = [adjoint_cost(model, gain, T, model.H[i]) for i in range(model.m)]
    adjoint_cost_sum = float(sum(per_row))
    rhs = adjoint_cost_sum + float(np.trace(model.R))

    reference = truncated_cost(model, gain, T, include_noise_floor=True)
    if abs(rhs - reference) > 1e-10 * (1.0 + abs(rhs)):
        raise NumericalError(
            f"adjoint evaluation {rhs!r} disagrees with the truncated cost "
            f"{reference!r}"
        )

    if noise is None:
        noise = NoiseConfig.default_for(model)
    sq_errors = np.empty(mc_samples)
    for i in range(mc_samples):
        traj = simulate(model, noise, T, derive_seed(seed, i))
        _, err = fixed_gain_predict(model.A, model.H, gain, traj, m0=model.m0)
        sq_errors[i] = float(err @ err)
    lhs = float(pairwise_mean(sq_errors))
    stderr = float(np.std(sq_errors) / np.sqrt(mc_samples))
    return {
        "lhs": lhs,
        "rhs": rhs,
        "adjoint_cost_sum": adjoint_cost_sum,
        "truncated_reference": reference,
        "mc_stderr": stderr,
        "mc_samples": mc_samples,
    }
