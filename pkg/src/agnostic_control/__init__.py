"""Optimal control of a system with an unknown constant drift: Bayesian
controllers, their regret against the known-drift optimum, and the
flat-prior (agnostic) limit."""

from .errors import (
    AsymmetricMatrix,
    BadHorizon,
    DegenerateOptimal,
    DimensionMismatch,
    GridMismatch,
    NoConvergence,
    NonFinite,
    NonPositiveDefinite,
    Singular,
)
from .estimator import EstimatorWeights, KernelMatrix, build_kernel, estimate_state, solve_weights
from .model import PriorSpec, SystemSpec, TimeGrid, augment, validate_spec
from .moments import (
    CostQuadratic,
    MomentState,
    compute_cost_quadratic,
    compute_cost_quadratic_star,
    propagate_bayesian_moments,
    propagate_known_a_moments,
)
from .regret import (
    ARLimitReport,
    BoundsReport,
    ConstantMRSolution,
    RegretReport,
    ar_limit,
    bayesian_cost,
    known_a_cost,
    mr_residual,
    mr_scan,
    regret_report,
    solve_constant_mr_prior,
    solve_constant_mr_prior_matrix,
    theorem1_bounds,
)
from .riccati import (
    ControlGain,
    EstimationCov,
    KnownACov,
    solve_alpha,
    solve_control_riccati,
    solve_estimation_riccati,
    solve_known_a_riccati,
)
from .simulator import (
    AgnosticAdditive,
    Bayesian,
    KnownA,
    SimConfig,
    SimResult,
    simulate,
    simulate_agnostic_additive,
    simulate_closed_loop,
    simulate_known_a,
)

__version__ = "0.1.0"
