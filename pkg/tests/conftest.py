"""Shared helpers: random observable systems, stabilizing-gain sampling, and
the 5-point finite-difference oracle used to validate analytic gradients."""

import numpy as np

from gainlearn import GainMatrix, SystemModel, spectral_radius, steady_state_gain
from gainlearn.model import observability_rank


def random_system(rng, n=None, m=None, rho_scale=None):
    """Random observable system with a well-conditioned R and PD Q."""
    n = int(n if n is not None else rng.integers(2, 6))
    m = int(m if m is not None else rng.integers(1, 4))
    m = min(m, n)
    while True:
        A = rng.normal(size=(n, n))
        scale = rho_scale if rho_scale is not None else rng.uniform(0.3, 1.1)
        A *= scale / max(spectral_radius(A), 1e-9)
        H = rng.normal(size=(m, n))
        if observability_rank(A, H) == n:
            break
    G = rng.normal(size=(n, n))
    Q = G @ G.T / n + 0.1 * np.eye(n)
    G = rng.normal(size=(m, m))
    R = G @ G.T / m + 0.2 * np.eye(m)
    G = rng.normal(size=(n, n))
    P0 = G @ G.T / n
    return SystemModel(A=A, H=H, Q=Q, R=R, P0=P0)


def random_stabilizing_gain(rng, model, rho_cap=0.9, spread=1.0):
    """A stabilizing gain sampled by perturbing the oracle gain."""
    gain_star, _ = steady_state_gain(model)
    for _ in range(200):
        D = rng.normal(size=gain_star.L.shape)
        s = spread * rng.uniform(0.0, 1.0)
        cand = GainMatrix.create(model.A, model.H, gain_star.L + s * D)
        if cand.rho <= rho_cap:
            return cand
    return gain_star


def fd_gradient(f, L, h=None):
    """5-point central finite differences of a scalar function of a matrix."""
    L = np.asarray(L, dtype=float)
    if h is None:
        h = 1e-5 * (1.0 + np.linalg.norm(L))
    grad = np.zeros_like(L)
    for i in range(L.shape[0]):
        for j in range(L.shape[1]):
            vals = []
            for step in (2 * h, h, -h, -2 * h):
                Lp = L.copy()
                Lp[i, j] += step
                vals.append(f(Lp))
            grad[i, j] = (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
    return grad
