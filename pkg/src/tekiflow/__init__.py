"""Derivative-free ensemble inversion flows with verified collapse diagnostics."""

from .ensemble import Ensemble, EnsembleStats, compute_mean, compute_stats, ensemble_spread
from .problems import (
    DifferentiableForward,
    InverseProblem,
    grad_regularized_loss,
    misfit,
    regularized_loss,
)
from .darcy import GridSpec, ObservationOperator, darcy_forward, darcy_jacobian, observe, solve_pde
from .priors import (
    HyperParamState,
    LaplacianEigenbasis,
    PriorSpec,
    build_eigenbasis,
    hyper_cov_apply_inverse,
    init_ensemble,
    sample_prior,
)
from .flows import (
    AdaptiveSettings,
    FlowParams,
    FlowState,
    adaptive_rhs,
    discrete_eki_step,
    make_rhs,
    teki_rhs,
)
from .integrate import (
    Checkpoint,
    IntegrationError,
    IntegratorConfig,
    Trajectory,
    checkpoint_times,
    integrate,
    solve_ode,
)
from .subspace import SubspaceBasis, build_subspace, project, restricted_min_eigenvalue
from .reference import ConstrainedSolution, OptimizationError, kkt_residual, solve_constrained
from .diagnostics import (
    BoundConstants,
    BoundReport,
    DiagnosticsRecord,
    check_trajectory,
    estimate_lipschitz,
    evaluate_trajectory,
    fit_rate,
    grad_approx_error,
    spread_bound,
    zeta_bound,
)
from .config import ExperimentConfig, load_config
from .runner import build_problem, check_experiment, reproduce, run_experiment
from .estimator import TikhonovEKI

__version__ = "0.1.0"

__all__ = [
    "Ensemble",
    "EnsembleStats",
    "compute_mean",
    "compute_stats",
    "ensemble_spread",
    "InverseProblem",
    "DifferentiableForward",
    "misfit",
    "regularized_loss",
    "grad_regularized_loss",
    "GridSpec",
    "ObservationOperator",
    "solve_pde",
    "observe",
    "darcy_forward",
    "darcy_jacobian",
    "LaplacianEigenbasis",
    "PriorSpec",
    "HyperParamState",
    "build_eigenbasis",
    "sample_prior",
    "init_ensemble",
    "hyper_cov_apply_inverse",
    "FlowParams",
    "FlowState",
    "AdaptiveSettings",
    "teki_rhs",
    "adaptive_rhs",
    "make_rhs",
    "discrete_eki_step",
    "IntegratorConfig",
    "IntegrationError",
    "Trajectory",
    "Checkpoint",
    "checkpoint_times",
    "integrate",
    "solve_ode",
    "SubspaceBasis",
    "build_subspace",
    "project",
    "restricted_min_eigenvalue",
    "ConstrainedSolution",
    "OptimizationError",
    "solve_constrained",
    "kkt_residual",
    "BoundConstants",
    "BoundReport",
    "DiagnosticsRecord",
    "spread_bound",
    "zeta_bound",
    "grad_approx_error",
    "estimate_lipschitz",
    "fit_rate",
    "evaluate_trajectory",
    "check_trajectory",
    "ExperimentConfig",
    "load_config",
    "build_problem",
    "run_experiment",
    "reproduce",
    "check_experiment",
    "TikhonovEKI",
]
