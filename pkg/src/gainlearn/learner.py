"""Data-driven gain learning: per-trajectory stochastic gradients, batched
averaging, safeguarded SGD, exact-gradient descent with backtracking, a
perturbation-robustness margin, and conservative sample-size calculators.

The update path touches the noise covariances nowhere: `stochastic_gradient`
and `batch_gradient` accept only (A, H), the candidate gain, and output data.
The true model enters a run solely through the simulator that produces data
and, optionally, through an oracle used to log the cost of each iterate.
"""

import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    InitializationError,
    InstabilityError,
    StallError,
)
from .filtering import GainMatrix, steady_state_gain
from .linalg import solve_discrete_lyapunov, spectral_radius
from .model import NoiseConfig, SystemModel, make_batch
from .objective import cost_report, pairwise_mean, steady_cost
from .seeding import derive_seed

__all__ = [
    "SgdConfig",
    "RunRecord",
    "stochastic_gradient",
    "batch_gradient",
    "stability_margin",
    "sgd_run",
    "gd_run",
    "initial_gain",
    "UniformBounds",
    "sample_requirements",
]


@dataclass
class SgdConfig:
    step_size: float = 1e-3
    batch_size: int = 10
    horizon: int = 50
    max_iters: int = 100
    seed: int = 0
    safeguard: str = "reject_and_shrink"
    target_rho: float = 0.995
    # reject_and_shrink internals: how many halvings a single step may try
    # before the whole step is abandoned (64x rescues a plausible overshoot;
    # an absurd step size should stall, not limp through), and how many
    # abandoned steps in a row trigger a stall error.
    max_step_halvings: int = 6
    stall_limit: int = 50

    def __post_init__(self):
        if self.step_size <= 0:
            raise DomainError("step_size must be positive")
        if min(self.batch_size, self.horizon, self.max_iters) < 1:
            raise DomainError("batch_size, horizon and max_iters must be >= 1")
        if not 0.0 < self.target_rho < 1.0:
            raise DomainError("target_rho must lie in (0, 1)")
        if self.safeguard not in ("reject_and_shrink", "assert_only"):
            raise DomainError(f"unknown safeguard mode {self.safeguard!r}")


@dataclass
class RunRecord:
    """Per-iterate log of a run. All sequences have length (steps + 1); the
    final row carries NaN step fields since no step leaves the last iterate.
    Every accepted iterate is stabilizing."""

    iterates: list = field(default_factory=list)
    costs: list = field(default_factory=list)
    grad_norms: list = field(default_factory=list)
    rhos: list = field(default_factory=list)
    etas: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    safeguard_events: list = field(default_factory=list)  # (iter, action)

    def append(self, gain, cost, grad_norm, eta, wall):
        self.iterates.append(gain)
        self.costs.append(cost)
        self.grad_norms.append(grad_norm)
        self.rhos.append(gain.rho)
        self.etas.append(eta)
        self.wall_times.append(wall)

    @property
    def steps(self) -> int:
        return len(self.iterates) - 1

    def safeguard_iters(self) -> set:
        return {k for k, _ in self.safeguard_events}


def _check_data_shapes(A, H, traj_outputs):
    n, m = A.shape[0], H.shape[0]
    if traj_outputs.ndim != 2 or traj_outputs.shape[1] != m:
        raise DimensionError(
            f"outputs must be (T+1)x{m}, got {traj_outputs.shape}"
        )
    if traj_outputs.shape[0] < 2:
        raise DomainError("need T >= 1 (at least two outputs)")
    return n, m


def stochastic_gradient(A, H, L, traj) -> np.ndarray:
    """Gradient of ||y(T) - yhat_L(T)||^2 for one trajectory.

    Needs only (A, H) and the outputs; expectation over trajectories equals
    the gradient of the finite-horizon cost (zero-mean start assumed).
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    gain = L if isinstance(L, GainMatrix) else GainMatrix.create(A, H, L)
    ys = np.ascontiguousarray(traj.outputs, dtype=float)
    _check_data_shapes(A, H, ys)
    grad, _ = kernels.trajectory_gradient(
        np.ascontiguousarray(gain.closed_loop), H,
        np.ascontiguousarray(gain.L), ys,
    )
    return grad


def batch_gradient(A, H, L, batch) -> np.ndarray:
    """Mean of per-trajectory gradients, reduced with an index-ascending
    pairwise tree so the value is independent of how the work is split."""
    if len(batch) == 0:
        raise DomainError("batch must be nonempty")
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    gain = L if isinstance(L, GainMatrix) else GainMatrix.create(A, H, L)
    T = batch[0].T
    for traj in batch:
        if traj.T != T:
            raise DomainError("all trajectories in a batch must share the horizon")
    Y = np.ascontiguousarray(
        np.stack([traj.outputs for traj in batch]), dtype=float
    )
    _check_data_shapes(A, H, Y[0])
    grads = kernels.batch_trajectory_gradients(
        np.ascontiguousarray(gain.closed_loop), H,
        np.ascontiguousarray(gain.L), Y,
    )
    return pairwise_mean(grads)


def stability_margin(A, H, L, Lam=None) -> float:
    """Frobenius radius around a stabilizing L inside which every perturbed
    gain stays stabilizing: lambda_min(Lam) / (2 lambda_max(Z) ||H||) with
    Z = A_L Z A_L^T + Lam."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    gain = L if isinstance(L, GainMatrix) else GainMatrix.create(A, H, L)
    if not gain.is_stabilizing:
        raise InstabilityError(f"gain not stabilizing (rho={gain.rho:.6f})")
    Lam = np.eye(A.shape[0]) if Lam is None else np.atleast_2d(np.asarray(Lam, dtype=float))
    lam_eigs = np.linalg.eigvalsh(Lam)
    if lam_eigs[0] <= 0:
        raise DomainError("Lam must be positive definite")
    Z = solve_discrete_lyapunov(gain.closed_loop, Lam)
    z_max = float(np.max(np.linalg.eigvalsh(Z)))
    return float(lam_eigs[0] / (2.0 * z_max * np.linalg.norm(H, 2)))


def initial_gain(A, H, strategy="surrogate_dare", L_user=None) -> GainMatrix:
    """A stabilizing starting gain using no knowledge of the true covariances.

    surrogate_dare solves the steady-state problem with placeholder identity
    covariances; zero_if_stable returns L = 0 when the open loop is already
    stable; user validates a supplied gain.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if strategy == "surrogate_dare":
        surrogate = SystemModel(A=A, H=H, Q=np.eye(A.shape[0]),
                                R=np.eye(H.shape[0]), P0=np.eye(A.shape[0]))
        gain, _ = steady_state_gain(surrogate)
    elif strategy == "zero_if_stable":
        if spectral_radius(A) >= 1.0:
            raise InitializationError("open loop unstable; zero gain does not stabilize")
        gain = GainMatrix.create(A, H, np.zeros((A.shape[0], H.shape[0])))
    elif strategy == "user":
        if L_user is None:
            raise InitializationError("strategy 'user' requires a gain")
        gain = L_user if isinstance(L_user, GainMatrix) else GainMatrix.create(A, H, L_user)
    else:
        raise DomainError(f"unknown initialization strategy {strategy!r}")
    if not gain.is_stabilizing:
        raise InitializationError(
            f"strategy {strategy!r} produced a non-stabilizing gain (rho={gain.rho:.6f})"
        )
    return gain


def sgd_run(model_sim: SystemModel, noise: NoiseConfig, L0, cfg: SgdConfig,
            oracle: SystemModel | None = None) -> RunRecord:
    """Safeguarded stochastic gradient descent on fresh output data.

    Each iteration draws a fresh batch, averages the per-trajectory
    gradients, and proposes L - eta * grad with eta reset to the configured
    step size. A proposal whose closed-loop spectral radius reaches
    cfg.target_rho is rejected; under reject_and_shrink the step retries
    with halved eta up to cfg.max_step_halvings times, after which the step
    is abandoned (the iterate stays put). More than cfg.stall_limit
    abandoned steps in a row raise a stall error. Under assert_only the
    first rejection aborts the run.

    The oracle model is used only to log the steady cost of each iterate.
    """
    A, H = model_sim.A, model_sim.H
    gain = L0 if isinstance(L0, GainMatrix) else GainMatrix.create(A, H, L0)
    if not gain.is_stabilizing:
        raise DomainError(f"initial gain not stabilizing (rho={gain.rho:.6f})")

    record = RunRecord()
    consecutive_failed = 0
    for k in range(cfg.max_iters):
        t0 = time.perf_counter()
        batch = make_batch(model_sim, noise, cfg.horizon, cfg.batch_size,
                           derive_seed(cfg.seed, k))
        grad = batch_gradient(A, H, gain, batch)
        gnorm = float(np.linalg.norm(grad))

        eta = cfg.step_size
        accepted = None
        for halving in range(cfg.max_step_halvings + 1):
            candidate = GainMatrix.create(A, H, gain.L - eta * grad)
            if candidate.rho < cfg.target_rho:
                accepted = candidate
                break
            if cfg.safeguard == "assert_only":
                raise InstabilityError(
                    f"step {k} rejected at rho={candidate.rho:.6f} "
                    f"(assert_only safeguard)"
                )
            record.safeguard_events.append((k, f"halve eta -> {eta / 2:.3g}"))
            eta *= 0.5

        wall = time.perf_counter() - t0
        cost = steady_cost(oracle, gain) if oracle is not None else math.nan
        if accepted is None:
            record.safeguard_events.append((k, "step abandoned"))
            record.append(gain, cost, gnorm, math.nan, wall)
            consecutive_failed += 1
            if consecutive_failed > cfg.stall_limit:
                record.append(gain, cost, math.nan, math.nan, 0.0)
                raise StallError(
                    f"{consecutive_failed} consecutive rejected steps "
                    f"(step size {cfg.step_size:g} cannot be salvaged)",
                    record=record,
                )
            continue
        consecutive_failed = 0
        record.append(gain, cost, gnorm, eta, wall)
        gain = accepted

    final_cost = steady_cost(oracle, gain) if oracle is not None else math.nan
    record.append(gain, final_cost, math.nan, math.nan, 0.0)
    return record


def gd_run(model: SystemModel, L0, tol=1e-10, max_iters=20_000) -> RunRecord:
    """Exact-gradient descent with Armijo backtracking, constrained to the
    stabilizing set (a candidate with rho >= 1 fails the line search).

    Terminates when the gradient Frobenius norm drops to tol. Once the full
    step's cost decrease (about ||grad||^2) falls within rounding of J, the
    sufficient-decrease test is no longer meaningful in double precision;
    from there steps continue with a Barzilai-Borwein step size (curvature
    estimated from successive gradients, no cost comparison), still
    stability-checked, which handles ill-conditioned tails that a fixed
    step cannot finish.
    """
    gain = L0 if isinstance(L0, GainMatrix) else GainMatrix.create(model.A, model.H, L0)
    if not gain.is_stabilizing:
        raise DomainError(f"initial gain not stabilizing (rho={gain.rho:.6f})")

    record = RunRecord()
    eta_prev = None
    prev_L = None
    prev_grad = None
    for k in range(max_iters):
        t0 = time.perf_counter()
        report = cost_report(model, gain)
        gnorm = float(np.linalg.norm(report.grad))
        if gnorm <= tol:
            record.append(gain, report.J, gnorm, math.nan,
                          time.perf_counter() - t0)
            return record

        in_tail = (eta_prev is not None
                   and gnorm ** 2 < 1e-10 * (1.0 + abs(report.J)))
        accepted = None
        if in_tail:
            eta = eta_prev
            if prev_L is not None:
                dL = gain.L - prev_L
                dg = report.grad - prev_grad
                curve = float(np.sum(dL * dg))
                if curve > 0:
                    eta = float(np.sum(dL * dL)) / curve
            prev_L, prev_grad = gain.L, report.grad
            for _ in range(60):
                candidate = GainMatrix.create(model.A, model.H,
                                              gain.L - eta * report.grad)
                if candidate.rho < 1.0:
                    accepted = candidate
                    break
                eta *= 0.5
        else:
            prev_L, prev_grad = gain.L, report.grad
            eta = 1.0
            for _ in range(60):
                candidate = GainMatrix.create(model.A, model.H,
                                              gain.L - eta * report.grad)
                if candidate.rho < 1.0:
                    J_cand = steady_cost(model, candidate)
                    if J_cand <= report.J - 1e-4 * eta * gnorm ** 2:
                        accepted = candidate
                        break
                else:
                    record.safeguard_events.append((k, "unstable candidate rejected"))
                eta *= 0.5
            if accepted is not None:
                eta_prev = eta
        if accepted is None:
            record.append(gain, report.J, gnorm, math.nan,
                          time.perf_counter() - t0)
            raise ConvergenceError(
                f"line search failed at iteration {k} (grad norm {gnorm:.3e})",
                record=record,
            )
        record.append(gain, report.J, gnorm, eta, time.perf_counter() - t0)
        gain = accepted

    report = cost_report(model, gain)
    record.append(gain, report.J, float(np.linalg.norm(report.grad)),
                  math.nan, 0.0)
    raise ConvergenceError(
        f"gradient norm {np.linalg.norm(report.grad):.3e} > tol {tol:g} "
        f"after {max_iters} iterations",
        record=record,
    )


class UniformBounds(NamedTuple):
    """Sublevel-set proxies: a power-bound constant C, a spectral-radius
    bound rho, and a gain-norm bound D."""

    C: float
    rho: float
    D: float


def sample_requirements(bounds: UniformBounds, H, kappas, s, s0, tau, delta,
                        n, m):
    """Conservative horizon and batch-size floors for the biased-gradient
    oracle model.

    Evaluates, with kappa = kappa_xi + D * kappa_omega,

        gamma_bar = 10 kappa^4 C^6 ||H||^2 ||H||_*
        nu        = 5 C^3 ||H||^2 ||H||_* kappa^2 / (1 - sqrt(rho))^3
        T_min     = ceil( ln(gamma_bar sqrt(min(n,m)) / s0) / ln(1/sqrt(rho)) )
        M_min     = ceil( 4 nu^2 min(n,m) ln(2n/delta) / (s s0)^2 )

    `tau` (the near-optimality cutoff) is validated but does not enter these
    simplified bounds. The results are known to exceed empirically
    sufficient sizes by large factors.
    """
    C, rho, D = float(bounds.C), float(bounds.rho), float(bounds.D)
    if not 0.0 < rho < 1.0:
        raise DomainError("rho must lie in (0, 1)")
    if min(C, s, s0, delta) <= 0 or D < 0:
        raise DomainError("constants must be positive")
    if not 0.0 < tau <= 1.0:
        raise DomainError("tau must lie in (0, 1]")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    kappa_xi, kappa_omega = kappas
    kappa = kappa_xi + D * kappa_omega
    h_op = float(np.linalg.norm(H, 2))
    h_nuc = float(np.sum(np.linalg.svd(H, compute_uv=False)))
    dim = min(n, m)

    gamma_bar = 10.0 * kappa ** 4 * C ** 6 * h_op ** 2 * h_nuc
    nu = 5.0 * C ** 3 * h_op ** 2 * h_nuc * kappa ** 2 / (1.0 - math.sqrt(rho)) ** 3

    T_min = math.log(gamma_bar * math.sqrt(dim) / s0) / math.log(1.0 / math.sqrt(rho))
    M_min = 4.0 * nu ** 2 * dim * math.log(2.0 * n / delta) / (s * s0) ** 2
    return max(0, math.ceil(T_min)), max(1, math.ceil(M_min))
