"""beta-NMF by multiplicative updates with exact disjoint equality constraints.

Weighted-sum and sphere constraints are enforced after every factor update
by solving a scalar multiplier equation with safeguarded Newton-Raphson,
while the objective decreases monotonically.  Ships the constrained
alternating drivers (baseline, simplex-structured, volume-penalized and
sparse-sphere KL models), synthetic data generators and a small CLI.
"""

from .algorithms import (
    ConvergenceTrace,
    ObjectiveParts,
    SolverOptions,
    SparsitySchedule,
    fit_baseline,
    fit_constrained,
    fit_minvol_kl,
    fit_sparse_sphere_kl,
    fit_ssnmf,
    hoyer_sparsity,
    objective,
)
from .constraints import (
    ConstraintError,
    ConstraintSet,
    IndexSet,
    LinearConstraint,
    SphereConstraint,
    Violation,
    complement,
    ensure_valid,
    simplex_columns,
    simplex_columns_of_w,
    validate,
)
from .divergence import (
    BetaParams,
    D_beta,
    DomainError,
    Regime,
    beta_params,
    d_beta,
    d_beta_sum,
    split_concave,
    split_concave_d1,
    split_convex,
    split_convex_d1,
)
from .matio import MatrixIOError, load_matrix, parse_constraints, save_matrix
from .oracle import OracleConfig, minimize_majorizer_on_simplex_slice, scan_root_uniqueness
from .rootfind import (
    DomainHint,
    MaxItersError,
    NoSignChangeError,
    RootProblem,
    SolverError,
    solve_decreasing_convex_positive,
    solve_increasing_convex,
)
from .synth import synth_simplex
from .updates import (
    MajorizerCoefficients,
    MinVolState,
    SphereUpdateResult,
    majorizer_entry_functions,
    minvol_coefficients,
    minvol_state,
    mu_coefficients,
    solve_minvol_multipliers,
    update_linear_constrained,
    update_minvol_w,
    update_sparse_h,
    update_sphere_all,
    update_sphere_w,
    update_unconstrained,
)

__version__ = "0.1.0"
