"""Classical Kalman machinery: the time-varying recursion, the steady-state
(Riccati fixed point) oracle gain, and fixed-gain output prediction.

The steady-state gain is the ground truth that the data-driven learner is
benchmarked against; prediction uses only (A, H) and the output data.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConvergenceError, DimensionError, DomainError, InstabilityError
from .linalg import spectral_radius, symmetrize
from .model import SystemModel, Trajectory

__all__ = [
    "GainMatrix",
    "FilterState",
    "kalman_step",
    "steady_state_gain",
    "fixed_gain_predict",
]


@dataclass(frozen=True)
class GainMatrix:
    """A candidate filter gain with its cached closed loop A - L H."""

    L: np.ndarray
    closed_loop: np.ndarray
    rho: float

    @classmethod
    def create(cls, A, H, L) -> "GainMatrix":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        H = np.atleast_2d(np.asarray(H, dtype=float))
        L = np.atleast_2d(np.asarray(L, dtype=float))
        n, m = A.shape[0], H.shape[0]
        if L.shape != (n, m):
            raise DimensionError(f"gain must be {n}x{m}, got {L.shape}")
        closed = A - L @ H
        return cls(L=L, closed_loop=closed, rho=spectral_radius(closed))

    @property
    def is_stabilizing(self) -> bool:
        return self.rho < 1.0


def _gain_array(L):
    return L.L if isinstance(L, GainMatrix) else np.atleast_2d(np.asarray(L, dtype=float))


@dataclass
class FilterState:
    xhat: np.ndarray
    P: np.ndarray
    t: int = 0


def kalman_step(model: SystemModel, state: FilterState, y) -> FilterState:
    """One predict-update step of the time-varying filter.

    Returns xhat(t+1) = A xhat + L(t) (y - H xhat) with the innovation-based
    gain L(t) = A P H^T S^{-1}, S = H P H^T + R, and the matching covariance
    recursion. P is re-symmetrized after the update to suppress drift.
    """
    A, H, Q, R = model.A, model.H, model.Q, model.R
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape != (model.m,):
        raise DimensionError(f"output must have length {model.m}")
    P = state.P
    S = H @ P @ H.T + R
    K = A @ P @ H.T @ np.linalg.inv(S)
    xhat = A @ state.xhat + K @ (y - H @ state.xhat)
    P_next = symmetrize(A @ P @ A.T + Q - K @ H @ P @ A.T)
    return FilterState(xhat=xhat, P=P_next, t=state.t + 1)


def steady_state_gain(model: SystemModel, tol=1e-14, max_iters=100_000):
    """Fixed point of the covariance recursion and the resulting gain.

    Iterates the Riccati update from P0 until the increment falls below
    tol * (1 + ||P||); the returned gain is checked to be stabilizing.
    """
    A, H, Q, R = model.A, model.H, model.Q, model.R
    P = model.P0.copy()
    for _ in range(max_iters):
        S = H @ P @ H.T + R
        K = A @ P @ H.T @ np.linalg.inv(S)
        P_next = symmetrize(A @ P @ A.T + Q - K @ H @ P @ A.T)
        if np.linalg.norm(P_next - P) <= tol * (1.0 + np.linalg.norm(P_next)):
            P = P_next
            break
        P = P_next
    else:
        raise ConvergenceError(f"covariance iteration did not settle in {max_iters} steps")
    L = A @ P @ H.T @ np.linalg.inv(H @ P @ H.T + R)
    gain = GainMatrix.create(A, H, L)
    if not gain.is_stabilizing:
        raise InstabilityError(f"steady-state gain not stabilizing (rho={gain.rho:.6f})")
    return gain, P


def fixed_gain_predict(A, H, L, traj: Trajectory, m0=None):
    """Predict y(T) with a constant gain by rolling xhat(t+1) = A_L xhat + L y(t).

    Uses only A and H (never the noise covariances). Stability of L is not
    required over a finite horizon. Returns (yhat, y(T) - yhat).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n, m = A.shape[0], H.shape[0]
    if isinstance(L, GainMatrix):
        Lm, A_L = L.L, L.closed_loop
    else:
        Lm = np.atleast_2d(np.asarray(L, dtype=float))
        if Lm.shape != (n, m):
            raise DimensionError(f"gain must be {n}x{m}, got {Lm.shape}")
        A_L = A - Lm @ H
    ys = np.ascontiguousarray(traj.outputs, dtype=float)
    if ys.ndim != 2 or ys.shape[1] != m:
        raise DimensionError(f"outputs must be (T+1)x{m}, got {ys.shape}")
    if traj.T < 1:
        raise DomainError("trajectory must contain at least two outputs")
    m0 = np.zeros(n) if m0 is None else np.asarray(m0, dtype=float).reshape(-1)
    if m0.shape != (n,):
        raise DimensionError(f"m0 must have length {n}")
    yhat, err = kernels.predict_output(
        np.ascontiguousarray(A_L), H, np.ascontiguousarray(Lm), ys,
        np.ascontiguousarray(m0),
    )
    return yhat, err
