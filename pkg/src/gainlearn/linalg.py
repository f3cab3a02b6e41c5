"""Dense small-matrix primitives: discrete Lyapunov solves, spectral radius,
and contour-resolvent constants certifying geometric bounds on matrix powers.

Everything here is a pure function of its inputs and sized for desk-scale
systems (n up to a few tens); no sparse or large-scale paths.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError, InstabilityError

__all__ = [
    "spectral_radius",
    "solve_discrete_lyapunov",
    "resolvent_constant",
    "ResolventEstimate",
    "symmetrize",
    "psd_sqrt",
]


def _as_square(M, name="matrix"):
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise DomainError(f"{name} contains non-finite entries")
    return M


def symmetrize(M):
    return 0.5 * (M + M.T)


def spectral_radius(M) -> float:
    """Largest eigenvalue modulus, via the full (QR-iteration) eigenvalue set."""
    M = _as_square(M)
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def solve_discrete_lyapunov(F, W, tol=1e-14, max_doublings=200):
    """Solve X = F X F^T + W for Schur-stable F and symmetric W.

    Uses the fixed-point doubling iteration

        X_{j+1} = X_j + F_j X_j F_j^T,   F_{j+1} = F_j^2,   X_0 = W,

    so that X_j equals the series truncated at 2^j terms; robust on
    non-normal F. Terminates when the residual ||X - F X F^T - W||_F drops
    below tol * (1 + ||W||_F).
    """
    F = _as_square(F, "F")
    W = _as_square(W, "W")
    if F.shape != W.shape:
        raise DimensionError(f"F and W shapes differ: {F.shape} vs {W.shape}")
    w_scale = np.linalg.norm(W)
    if np.linalg.norm(W - W.T) > 1e-8 * (1.0 + w_scale):
        raise DomainError("W is not symmetric within tolerance")
    rho = spectral_radius(F)
    if rho >= 1.0:
        raise InstabilityError(f"spectral radius {rho:.6f} >= 1; no unique solution")

    W = symmetrize(W)
    X = W.copy()
    Fk = F.copy()
    for _ in range(max_doublings):
        increment = Fk @ X @ Fk.T
        X = X + increment
        residual = np.linalg.norm(X - F @ X @ F.T - W)
        if residual <= tol * (1.0 + w_scale):
            break
        Fk = Fk @ Fk
    return symmetrize(X)


@dataclass(frozen=True)
class ResolventEstimate:
    """Contour-maximum resolvent norm at radius `radius` on a theta grid.

    `c_value` certifies ||A^k|| <= c_value * radius**(k+1) for the matrix it
    was computed from (checked internally for k up to 50).
    """

    c_value: float
    radius: float
    grid_points: int

    def __post_init__(self):
        if not self.c_value > 0:
            raise DomainError("c_value must be positive")
        if not 0.0 < self.radius < 1.0:
            raise DomainError("radius must lie in (0, 1)")


def _grid_resolvent_max(A, r, grid_points):
    n = A.shape[0]
    eye = np.eye(n)
    thetas = 2.0 * np.pi * np.arange(grid_points) / grid_points
    best = 0.0
    for th in thetas:
        shifted = r * np.exp(1j * th) * eye - A
        # ||(zI - A)^{-1}||_2 = 1 / sigma_min(zI - A)
        smin = np.linalg.svd(shifted, compute_uv=False)[-1]
        if smin <= 0:
            return np.inf
        best = max(best, 1.0 / smin)
    return best


def resolvent_constant(A_L, grid_points=512, fallback_radius=0.5,
                       check_powers=50) -> ResolventEstimate:
    """Estimate the contour constant C with r = sqrt(rho(A_L)).

    The maximum over a theta grid is a lower bound of the continuum
    maximum, so the result is verified against ||A_L^k|| <= C r^(k+1) for
    k = 0..check_powers and the grid is refined if the certification fails.
    Doubling the grid is also used as a resolution check: a change of 1% or
    more triggers a warning.
    """
    A_L = _as_square(A_L, "A_L")
    if grid_points < 64:
        raise DomainError("grid_points must be at least 64")
    rho = spectral_radius(A_L)
    if rho >= 1.0:
        raise InstabilityError(f"spectral radius {rho:.6f} >= 1")
    r = np.sqrt(rho) if rho > 0.0 else float(fallback_radius)

    coarse = _grid_resolvent_max(A_L, r, grid_points)
    fine = _grid_resolvent_max(A_L, r, 2 * grid_points)
    if abs(fine - coarse) >= 0.01 * coarse:
        warnings.warn(
            f"resolvent grid not converged: {coarse:.6g} -> {fine:.6g} on doubling",
            RuntimeWarning,
        )
    c = max(coarse, fine)
    grid = 2 * grid_points

    # Certify the power bound; the grid max can undershoot the continuum max.
    for _ in range(3):
        if _power_bound_ok(A_L, c, r, check_powers):
            break
        grid *= 2
        c = max(c, _grid_resolvent_max(A_L, r, grid))
    else:
        c = max(c, _worst_power_ratio(A_L, r, check_powers))
    return ResolventEstimate(c_value=float(c), radius=float(r), grid_points=grid)


def _power_bound_ok(A, c, r, k_max):
    return _worst_power_ratio(A, r, k_max) <= c * (1.0 + 1e-12)


def _worst_power_ratio(A, r, k_max):
    worst = 0.0
    P = np.eye(A.shape[0])
    for k in range(k_max + 1):
        worst = max(worst, np.linalg.norm(P, 2) / r ** (k + 1))
        P = P @ A
    return worst


def psd_sqrt(M):
    """Symmetric PSD square root via eigendecomposition (descending order)."""
    M = _as_square(M, "M")
    vals, vecs = np.linalg.eigh(symmetrize(M))
    order = np.argsort(vals)[::-1]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    return (vecs * np.sqrt(vals)) @ vecs.T
