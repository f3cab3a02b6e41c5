"""Ground-truth model container and bounded-noise trajectory simulator.

The simulator produces output data for a linear system

    x(t+1) = A x(t) + xi(t),      y(t) = H x(t) + omega(t),

with noise drawn from a nominal Gaussian (or scaled uniform) and re-drawn
until it satisfies hard norm bounds, so that every recorded draw obeys
||xi(t)|| <= kappa_xi, ||omega(t)|| <= kappa_omega and ||x0|| <= kappa_xi
surely. Default bounds sit at six nominal standard deviations, which makes
the truncation statistically negligible while keeping the bound exact.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionError, DomainError
from .linalg import psd_sqrt, symmetrize
from .seeding import derive_seed, make_rng

__all__ = [
    "SystemModel",
    "NoiseConfig",
    "Trajectory",
    "mass_spring",
    "simulate",
    "make_batch",
    "save_trajectory_csv",
]

_PSD_TOL = 1e-10


def _check_psd(M, name, strict=False):
    M = np.asarray(M, dtype=float)
    if np.linalg.norm(M - M.T) > 1e-10 * (1.0 + np.linalg.norm(M)):
        raise DomainError(f"{name} must be symmetric")
    eigmin = float(np.min(np.linalg.eigvalsh(symmetrize(M)))) if M.size else 0.0
    if strict and eigmin <= _PSD_TOL:
        raise DomainError(f"{name} must be positive definite (min eig {eigmin:.3e})")
    if not strict and eigmin < -_PSD_TOL * (1.0 + abs(eigmin)):
        raise DomainError(f"{name} must be positive semidefinite (min eig {eigmin:.3e})")
    return symmetrize(M)


def observability_rank(A, H) -> int:
    n = A.shape[0]
    blocks = [H]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ A)
    return int(np.linalg.matrix_rank(np.vstack(blocks)))


@dataclass
class SystemModel:
    """Known dynamics (A, H) plus the noise statistics (Q, R, P0, m0).

    Only the simulator and oracle-side computations may touch Q, R, P0;
    the learning path sees output data and (A, H) alone.
    """

    A: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    P0: np.ndarray
    m0: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise DimensionError(f"A must be square, got {self.A.shape}")
        if self.H.shape[1] != n:
            raise DimensionError(f"H must have {n} columns, got {self.H.shape}")
        m = self.H.shape[0]
        # R positive definite is assumed by the steady-state theory, but the
        # simulator is well-defined for any PSD R (noiseless runs included)
        self.Q = _check_psd(np.atleast_2d(np.asarray(self.Q, dtype=float)), "Q")
        self.R = _check_psd(np.atleast_2d(np.asarray(self.R, dtype=float)), "R")
        self.P0 = _check_psd(np.atleast_2d(np.asarray(self.P0, dtype=float)), "P0")
        if self.Q.shape != (n, n):
            raise DimensionError(f"Q must be {n}x{n}, got {self.Q.shape}")
        if self.R.shape != (m, m):
            raise DimensionError(f"R must be {m}x{m}, got {self.R.shape}")
        if self.P0.shape != (n, n):
            raise DimensionError(f"P0 must be {n}x{n}, got {self.P0.shape}")
        if self.m0 is None:
            self.m0 = np.zeros(n)
        else:
            self.m0 = np.asarray(self.m0, dtype=float).reshape(-1)
            if self.m0.shape != (n,):
                raise DimensionError(f"m0 must have length {n}")
            if np.any(self.m0 != 0.0):
                warnings.warn(
                    "nonzero initial mean: the data-driven gradient and the "
                    "vectorized error identity assume a zero-mean start",
                    RuntimeWarning,
                )
        if observability_rank(self.A, self.H) != n:
            raise DomainError("(A, H) must be observable")
        # simulator draw matrices; fields are treated as frozen after init
        self._sqrt_P0 = psd_sqrt(self.P0)
        self._sqrt_Q = psd_sqrt(self.Q)
        self._sqrt_R = psd_sqrt(self.R)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.H.shape[0]


def mass_spring(omega=1.0, dt=0.1, state_noise_var=0.1, obs_noise_var=0.1,
                init_var=0.05) -> SystemModel:
    """Undamped mass-spring benchmark (n=2, m=1): a rotation discretized at
    step dt with position measurements. Marginally stable (rho(A) = 1)."""
    c, s = np.cos(omega * dt), np.sin(omega * dt)
    A = np.array([[c, s / omega], [-omega * s, c]])
    H = np.array([[1.0, 0.0]])
    return SystemModel(
        A=A,
        H=H,
        Q=state_noise_var * np.eye(2),
        R=np.array([[obs_noise_var]]),
        P0=init_var * np.eye(2),
    )


@dataclass
class NoiseConfig:
    """Hard norm bounds and distribution family for the noise draws."""

    kappa_xi: float
    kappa_omega: float
    family: str = "truncated_gaussian"

    _FAMILIES = ("truncated_gaussian", "scaled_uniform")

    def __post_init__(self):
        if self.kappa_xi <= 0 or self.kappa_omega <= 0:
            raise DomainError("noise bounds must be positive")
        if self.family not in self._FAMILIES:
            raise DomainError(f"unknown noise family {self.family!r}")

    @classmethod
    def default_for(cls, model: SystemModel, sigmas: float = 6.0,
                    family: str = "truncated_gaussian") -> "NoiseConfig":
        """Bounds at `sigmas` nominal standard deviations (in the vector norm
        sense, sqrt of the trace). kappa_xi also covers the initial state."""
        kx = sigmas * max(np.sqrt(np.trace(model.Q)), np.sqrt(np.trace(model.P0)))
        ko = sigmas * np.sqrt(np.trace(model.R))
        return cls(kappa_xi=float(kx) if kx > 0 else 1.0,
                   kappa_omega=float(ko) if ko > 0 else 1.0,
                   family=family)


@dataclass
class Trajectory:
    """One simulated run: outputs y(0..T), plus the hidden record when the
    trajectory came from the simulator."""

    outputs: np.ndarray                       # (T+1, m)
    states: np.ndarray | None = None          # (T+1, n)
    xi: np.ndarray | None = None              # (T, n), xi(0..T-1)
    omega: np.ndarray | None = None           # (T+1, m), omega(0..T)
    seed: int = 0

    @property
    def T(self) -> int:
        return self.outputs.shape[0] - 1

    @property
    def has_noise_record(self) -> bool:
        return self.states is not None and self.xi is not None and self.omega is not None


def _bounded_draws(rng, sqrt_cov, count, bound, family):
    """Draw `count` vectors B g with hard norm bound; violators are redrawn."""
    dim = sqrt_cov.shape[0]
    bound_sq = bound * bound
    if family == "truncated_gaussian":
        raw = rng.standard_normal((count, dim))
    else:  # scaled_uniform with unit variance per component
        raw = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(count, dim))
    draws = raw @ sqrt_cov.T
    for _ in range(1000):
        bad = np.einsum("ij,ij->i", draws, draws) > bound_sq
        if not bad.any():
            return draws
        k = int(np.sum(bad))
        if family == "truncated_gaussian":
            raw = rng.standard_normal((k, dim))
        else:
            raw = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(k, dim))
        draws[bad] = raw @ sqrt_cov.T
    raise DomainError(
        f"noise bound {bound:.3g} rejects nearly all draws; increase the bound"
    )


def simulate(model: SystemModel, noise: NoiseConfig, T: int, seed: int) -> Trajectory:
    """Simulate y(0..T). Identical (model, noise, T, seed) gives identical output.

    Draw order per trajectory is fixed: initial state, then all process
    noise, then all measurement noise.
    """
    if T < 1:
        raise DomainError(f"horizon T must be >= 1, got {T}")
    rng = make_rng(seed)
    sq_P0, sq_Q, sq_R = model._sqrt_P0, model._sqrt_Q, model._sqrt_R

    x0 = model.m0 + _bounded_draws(rng, sq_P0, 1, noise.kappa_xi, noise.family)[0]
    if np.linalg.norm(x0) > noise.kappa_xi:
        # Can only happen with nonzero m0; re-center draws cannot fix it.
        raise DomainError("initial mean violates the initial-state bound")
    xi = _bounded_draws(rng, sq_Q, T, noise.kappa_xi, noise.family)
    omega = _bounded_draws(rng, sq_R, T + 1, noise.kappa_omega, noise.family)

    states, outputs = kernels.simulate_path(
        np.ascontiguousarray(model.A), np.ascontiguousarray(model.H),
        np.ascontiguousarray(x0), np.ascontiguousarray(xi),
        np.ascontiguousarray(omega),
    )
    return Trajectory(outputs=outputs, states=states, xi=xi, omega=omega, seed=seed)


def make_batch(model: SystemModel, noise: NoiseConfig, T: int, M: int,
               seed: int) -> list[Trajectory]:
    """M independent trajectories with per-index sub-seeds derived from seed."""
    if M < 1:
        raise DomainError(f"batch size M must be >= 1, got {M}")
    return [simulate(model, noise, T, derive_seed(seed, i)) for i in range(M)]


def save_trajectory_csv(traj: Trajectory, path):
    m = traj.outputs.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"y_{j + 1}" for j in range(m)])
        for t, row in enumerate(traj.outputs):
            writer.writerow([t] + [repr(float(v)) for v in row])
