"""Hot inner loops: trajectory simulation, fixed-gain output prediction, and
the per-trajectory gradient of the squared prediction error.

Each kernel has a pure-numpy implementation and a numba @njit twin. The numba
path is the default; setting the environment variable GAINLEARN_DISABLE_NUMBA
to a non-empty value (or lacking a working numba install) selects the numpy
fallback. Both paths produce identical results up to floating-point
associativity of the underlying BLAS calls; `benchmarks/bench_kernels.py`
compares their throughput.

The gradient kernel evaluates, for outputs y(0..T) and error e = y(T) - yhat,

    grad = -2 * sum_{t=0}^{T-1} (A_L^T)^t H^T e y(T-t-1)^T
           + 2 * sum_{t=1}^{T-1} sum_{k=1}^{t}
               (A_L^T)^{t-k} H^T e y(T-t-1)^T L^T (A_L^T)^{k-1} H^T

in O(T^2) after caching the powers of A_L. The double sum is reorganized as
sum_j outer(g_j, v_j) with g_j = (A_L^T)^j H^T e and
v_j = sum_s (H A_L^{s-1} L) y(T-1-j-s), which keeps the inner work at
O(m^2) per (j, s) pair.
"""

import os

import numpy as np

_DISABLE = bool(os.environ.get("GAINLEARN_DISABLE_NUMBA", ""))

try:  # pragma: no cover - exercised implicitly by backend selection
    if _DISABLE:
        raise ImportError("numba disabled by GAINLEARN_DISABLE_NUMBA")
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


def active_backend() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# simulation: x(t+1) = A x(t) + xi(t), y(t) = H x(t) + omega(t)
# ---------------------------------------------------------------------------

def _simulate_numpy(A, H, x0, xi, omega):
    T = xi.shape[0]
    n = A.shape[0]
    m = H.shape[0]
    states = np.empty((T + 1, n))
    outputs = np.empty((T + 1, m))
    x = x0
    states[0] = x
    outputs[0] = H @ x + omega[0]
    for t in range(T):
        x = A @ x + xi[t]
        states[t + 1] = x
        outputs[t + 1] = H @ x + omega[t + 1]
    return states, outputs


@njit(cache=True)
def _simulate_numba(A, H, x0, xi, omega):  # pragma: no cover - jitted
    T = xi.shape[0]
    n = A.shape[0]
    m = H.shape[0]
    states = np.empty((T + 1, n))
    outputs = np.empty((T + 1, m))
    for i in range(n):
        states[0, i] = x0[i]
    for j in range(m):
        acc = omega[0, j]
        for i in range(n):
            acc += H[j, i] * x0[i]
        outputs[0, j] = acc
    for t in range(T):
        for i in range(n):
            acc = xi[t, i]
            for k in range(n):
                acc += A[i, k] * states[t, k]
            states[t + 1, i] = acc
        for j in range(m):
            acc = omega[t + 1, j]
            for i in range(n):
                acc += H[j, i] * states[t + 1, i]
            outputs[t + 1, j] = acc
    return states, outputs


# ---------------------------------------------------------------------------
# fixed-gain prediction: xhat(t+1) = A_L xhat(t) + L y(t)
# ---------------------------------------------------------------------------

def _predict_numpy(A_L, H, L, ys, m0):
    T = ys.shape[0] - 1
    x = m0.copy()
    for t in range(T):
        x = A_L @ x + L @ ys[t]
    yhat = H @ x
    return yhat, ys[T] - yhat


@njit(cache=True)
def _predict_numba(A_L, H, L, ys, m0):  # pragma: no cover - jitted
    T = ys.shape[0] - 1
    n = A_L.shape[0]
    m = H.shape[0]
    x = m0.copy()
    xn = np.empty(n)
    for t in range(T):
        for i in range(n):
            acc = 0.0
            for k in range(n):
                acc += A_L[i, k] * x[k]
            for j in range(m):
                acc += L[i, j] * ys[t, j]
            xn[i] = acc
        for i in range(n):
            x[i] = xn[i]
    yhat = np.empty(m)
    err = np.empty(m)
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += H[j, i] * x[i]
        yhat[j] = acc
        err[j] = ys[T, j] - acc
    return yhat, err


# ---------------------------------------------------------------------------
# per-trajectory gradient of ||y(T) - yhat(T)||^2 (zero initial estimate)
# ---------------------------------------------------------------------------

def _traj_grad_numpy(A_L, H, L, ys):
    T = ys.shape[0] - 1
    n = A_L.shape[0]
    _, e = _predict_numpy(A_L, H, L, ys, np.zeros(n))
    yrev = ys[T - 1::-1].copy()  # yrev[t] = y(T-1-t)

    powers = np.empty((T, n, n))
    powers[0] = np.eye(n)
    for j in range(1, T):
        powers[j] = powers[j - 1] @ A_L

    hte = H.T @ e
    g = np.einsum("jki,k->ji", powers, hte)  # g[j] = (A_L^T)^j H^T e

    grad = -2.0 * np.einsum("jn,jm->nm", g, yrev)
    if T >= 2:
        # v[j] = sum_{s=1}^{T-1-j} (H A_L^{s-1} L) yrev[j+s]
        W = np.einsum("ji,sil,lm->sjm", H, powers[: T - 1], L)  # W[s-1] = H A_L^{s-1} L
        v = np.zeros((T - 1, H.shape[0]))
        for s in range(1, T):
            v[: T - s] += yrev[s:T] @ W[s - 1].T
        grad += 2.0 * np.einsum("jn,jm->nm", g[: T - 1], v)
    return grad, e


@njit(cache=True)
def _traj_grad_numba(A_L, H, L, ys):  # pragma: no cover - jitted
    T = ys.shape[0] - 1
    n = A_L.shape[0]
    m = H.shape[0]
    m0 = np.zeros(n)
    _, e = _predict_numba(A_L, H, L, ys, m0)

    powers = np.empty((T, n, n))
    for i in range(n):
        for k in range(n):
            powers[0, i, k] = 1.0 if i == k else 0.0
    for j in range(1, T):
        for i in range(n):
            for k in range(n):
                acc = 0.0
                for l in range(n):
                    acc += powers[j - 1, i, l] * A_L[l, k]
                powers[j, i, k] = acc

    hte = np.zeros(n)
    for i in range(n):
        for jj in range(m):
            hte[i] += H[jj, i] * e[jj]

    g = np.empty((T, n))
    for j in range(T):
        for i in range(n):
            acc = 0.0
            for k in range(n):
                acc += powers[j, k, i] * hte[k]
            g[j, i] = acc

    grad = np.zeros((n, m))
    for t in range(T):
        for i in range(n):
            gi = g[t, i]
            for jj in range(m):
                grad[i, jj] -= 2.0 * gi * ys[T - 1 - t, jj]

    if T >= 2:
        # W[s] = H A_L^s L, s = 0..T-2
        W = np.empty((T - 1, m, m))
        for s in range(T - 1):
            for jj in range(m):
                for b in range(m):
                    acc = 0.0
                    for i in range(n):
                        hp = 0.0
                        for k in range(n):
                            hp += H[jj, k] * powers[s, k, i]
                        acc += hp * L[i, b]
                    W[s, jj, b] = acc
        v = np.empty(m)
        for j in range(T - 1):
            for jj in range(m):
                v[jj] = 0.0
            for s in range(1, T - j):
                for jj in range(m):
                    acc = 0.0
                    for b in range(m):
                        acc += W[s - 1, jj, b] * ys[T - 1 - j - s, b]
                    v[jj] += acc
            for i in range(n):
                gi = g[j, i]
                for jj in range(m):
                    grad[i, jj] += 2.0 * gi * v[jj]
    return grad, e


def _batch_grads_numpy(A_L, H, L, Y):
    M = Y.shape[0]
    n = A_L.shape[0]
    m = H.shape[0]
    out = np.empty((M, n, m))
    for i in range(M):
        out[i], _ = _traj_grad_numpy(A_L, H, L, Y[i])
    return out


@njit(cache=True)
def _batch_grads_numba(A_L, H, L, Y):  # pragma: no cover - jitted
    M = Y.shape[0]
    n = A_L.shape[0]
    m = H.shape[0]
    out = np.empty((M, n, m))
    for i in range(M):
        g, _ = _traj_grad_numba(A_L, H, L, Y[i])
        for a in range(n):
            for b in range(m):
                out[i, a, b] = g[a, b]
    return out


if _HAVE_NUMBA:
    simulate_path = _simulate_numba
    predict_output = _predict_numba
    trajectory_gradient = _traj_grad_numba
    batch_trajectory_gradients = _batch_grads_numba
else:
    simulate_path = _simulate_numpy
    predict_output = _predict_numpy
    trajectory_gradient = _traj_grad_numpy
    batch_trajectory_gradients = _batch_grads_numpy
