"""gainlearn: learn the steady-state filter gain of a known linear system
with unknown noise covariances, by stochastic gradient descent on the
output-prediction error, with analytic oracles and diagnostics."""

__version__ = "0.1.0"

from .diagnostics import (
    DecayReport,
    concentration_sweep,
    power_bound_check,
    prediction_error_identity,
    truncation_decay,
)
from .filtering import FilterState, GainMatrix, fixed_gain_predict, kalman_step, steady_state_gain
from .kernels import active_backend
from .learner import (
    RunRecord,
    SgdConfig,
    UniformBounds,
    batch_gradient,
    gd_run,
    initial_gain,
    sample_requirements,
    sgd_run,
    stability_margin,
    stochastic_gradient,
)
from .linalg import ResolventEstimate, resolvent_constant, solve_discrete_lyapunov, spectral_radius
from .model import (
    NoiseConfig,
    SystemModel,
    Trajectory,
    make_batch,
    mass_spring,
    save_trajectory_csv,
    simulate,
)
from .objective import (
    CostReport,
    cost_gradient,
    cost_report,
    duality_check,
    steady_cost,
    truncated_cost,
    truncated_cost_gradient,
)

__all__ = [
    "__version__",
    "active_backend",
    "spectral_radius",
    "solve_discrete_lyapunov",
    "resolvent_constant",
    "ResolventEstimate",
    "SystemModel",
    "NoiseConfig",
    "Trajectory",
    "mass_spring",
    "simulate",
    "make_batch",
    "save_trajectory_csv",
    "GainMatrix",
    "FilterState",
    "kalman_step",
    "steady_state_gain",
    "fixed_gain_predict",
    "CostReport",
    "steady_cost",
    "cost_gradient",
    "cost_report",
    "truncated_cost",
    "truncated_cost_gradient",
    "duality_check",
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
    "DecayReport",
    "prediction_error_identity",
    "truncation_decay",
    "concentration_sweep",
    "power_bound_check",
]
