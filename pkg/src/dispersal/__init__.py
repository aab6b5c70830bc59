"""Nonlocal dispersal logistic equation: discretization, branches, bounds.

The package discretizes the dispersal operator L0 u(x) = integral of
K(x, y) u(y) dy by Nystrom quadrature, computes its principal eigenpair,
traces the branch of positive steady states of L0 u + Phi_u u = lambda u
bifurcating at the principal eigenvalue, solves the regularized weight
family and its vanishing-regularization limit, and verifies every
quantitative bound along the way.
"""

from .continuation import (
    Branch,
    BranchPoint,
    ContinuationConfig,
    ContinuationError,
    PositivityLost,
    StepFailure,
    bifurcation_estimate,
    newton_correct,
    seed_branch,
    solvability_window,
    solve_at_lambda,
    trace_branch,
    window_bounds,
)
from .geometry import (
    Covering,
    Domain,
    GeometryError,
    QuadratureGrid,
    build_grid,
    cover,
)
from .logistic import (
    PhiField,
    ReactionError,
    g_map,
    in_admissible_set,
    jacobian,
    phi,
    residual,
)
from .model import (
    FloorReport,
    HypothesisReport,
    KernelSpec,
    ModelError,
    WeightSpec,
    build_a_eps,
    build_q_eps,
    certify,
    check_k1,
    check_k2,
    check_weight_floor,
    eps_ceiling,
    kernel_matrix,
    oscillation,
    weight_matrix,
)
from .operator import (
    DiscreteOperator,
    OperatorError,
    PrincipalEigenpair,
    assemble,
    collatz_wielandt_sup,
    principal_eigenpair,
    rayleigh,
)
from .regularized import (
    EXTRAPOLATION_METHODS,
    RegularizedError,
    RegularizedRun,
    RegularizedSolve,
    check_dip_margin,
    limit_procedure,
    multi_point_profile,
    near_center_mass_bound,
    solve_regularized,
    theta_margin,
)
from .verification import (
    BoundReport,
    OracleResult,
    VerificationError,
    check_admissibility,
    check_collatz_wielandt,
    check_covering_bound,
    check_phi_floor,
    check_positivity,
    check_rate_nonexistence,
    check_solvability_window,
    check_subcritical_nonexistence,
    oracle_fixed_point,
    oracle_spectral,
    pencil_eigenvalue,
    verify_branch,
)

__version__ = "0.1.0"
