"""degenlab: numerical laboratory for elliptic equations whose diffusion
carries a weight |y|^a singular on a low-dimensional set.

The library solves -div(|y|^a A grad u) = |y|^a f + div(|y|^a F) with
Dirichlet data on {y = 0} (or on a shrinking tube around it), and measures
the regularity, boundary-condition, frequency and inequality behaviour of
the discrete solutions against analytic oracles.
"""

__version__ = "0.1.0"

from .grid import (
    DomainMask,
    EllipsoidRegion,
    Grid,
    GridSpec,
    build_grid,
    classify_nodes,
    ellipsoid_membership,
    restrict_to_sigma0,
)
from .quadrature import (
    GridQuadrature,
    NormValue,
    QuadratureRule,
    WeightSpec,
    element_weighted_integral,
    sobolev_exponent,
    weight_eval,
    weighted_h1_norm,
    weighted_lp_norm,
)
from .solver import (
    CoefficientField,
    LinearSystem,
    ProblemSpec,
    SolveResult,
    SolverError,
    apply_dirichlet,
    assemble,
    energy,
    identity_coefficients,
    solve_cg,
    solve_problem,
)
from .cases import (
    CATALOG,
    ManufacturedCase,
    case_fields,
    divergence_forcing,
    exact_error,
    forcing_consistency,
    get_case,
)
from .frequency import (
    FrequencyProfile,
    GrowthRecord,
    InequalityReport,
    caccioppoli_ratio,
    check_derivative_identity,
    frequency_profile,
    growth_validator,
    inequality_battery,
    moser_ratio,
    spectral_trace_check,
)
from .rates import (
    ConormalTrace,
    RateReport,
    conormal_decay,
    epsilon_sweep,
    gradient_holder_fit,
    holder_exponent_fit,
    limiting_bc_residual,
)
from .curved import (
    CurvedProblem,
    Parametrization,
    Straightening,
    admissibility_check,
    curved_bc_residual,
    make_parametrization,
    pullback_field,
    push_problem,
)
