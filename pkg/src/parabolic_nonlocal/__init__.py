"""Spectral Galerkin machinery for non-autonomous parabolic flows with
nonlocal initial conditions: contractive propagators, hypothesis audits,
and a homotopy-continuation fixed-point solver."""

__version__ = "0.1.0"

from .galerkin import (
    FormAuditReport,
    GalerkinSpace,
    Projection,
    TimeForm,
    assemble_form_matrix,
    assemble_projected_form,
    audit_dini,
    build_sine_space,
    constant_form,
    default_audit_grid,
    estimate_bounds,
    project,
)
from .evolution import (
    Propagator,
    TimeGrid,
    Trajectory,
    adjoint_propagate,
    build_propagator,
    duhamel_direct_sum,
    duhamel_solve,
    l2h_distance,
    make_trajectory,
    projected_convergence_study,
    propagate,
    regularity_ratio,
    subspace_invariance_residual,
    trajectory_to_csv,
    weighted_diagnostic,
    zero_trajectory,
)
from .nonlinearity import (
    ConvexFunctional,
    Nonlinearity,
    TransversalityReport,
    apply_superposition,
    check_monotone,
    evi_residual,
    gradient_consistency,
    growth_audit,
    negated_identity,
    pseudo_huber_functional,
    quadratic_functional,
    saturating_drift,
    scan_transversality,
    zero_nonlinearity,
)
from .nonlocal_solver import (
    GBoundAudit,
    NonlocalCondition,
    NonlocalProblem,
    SolveReport,
    SolverConfig,
    annulus_energy_check,
    audit_g_bound,
    audit_problem,
    estimate_g_star,
    exp_shift,
    g_constant,
    g_mollified_integral,
    homotopy_map,
    solve_nonlocal,
    unshift_trajectory,
)
from .models import (
    CoefficientField,
    MollifierKernel,
    audit_coefficient_field,
    constant_coefficient,
    cosine_bump_kernel,
    divergence_form_assemble,
    preset_evi,
    preset_heat_timevarying,
    time_power_coefficient,
)
