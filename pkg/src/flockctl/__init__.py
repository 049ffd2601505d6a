"""Optimal consensus control of Cucker-Smale swarms."""

from .core import (
    DomainError,
    ModelParams,
    SwarmState,
    TimeGrid,
    Verdict,
    bilinear_B,
    consensus_functionals,
    controlled_rhs,
    free_rhs,
    kernel_eval,
    kernel_slope_ratio,
    mean_velocity,
    velocity_deviation,
    predict_consensus,
)
from .integrator import AdjointTrajectory, IntegrationError, Trajectory, integrate_adjoint, integrate_forward
from .meanfield import (
    Histogram1D,
    MixtureConfig,
    StudyRecord,
    control_norm_stats,
    run_study,
    sample_initial,
    velocity_marginal,
)
from .ocp import (
    CostParams,
    OCPResult,
    adjoint_rhs,
    bb_descent,
    compute_gradient,
    fd_gradient,
    running_cost,
    total_cost,
)
from .sparse import HeatMap, NMPCConfig, PSOConfig, heat_map, nmpc_cost, nmpc_loop, pso_minimize, sparsity_fraction

__version__ = "0.1.0"
