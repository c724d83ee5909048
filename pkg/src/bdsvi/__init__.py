"""Numerical laboratory for penalized backward doubly stochastic variational
inequalities: convex/prox calculus, Brownian drivers, reflected diffusions
with boundary local time, a penalized backward solver, pathwise flow
transforms, and Monte-Carlo sampling of the associated value field."""

from .convex import (
    CATALOG,
    AssumptionConstants,
    CompatibilityReport,
    ConvexFunction,
    WeightReport,
    check_compatibility,
    grid_prox_oracle,
    make_convex,
    moreau_envelope,
    one_sided_derivatives,
    prox,
    prox_property_suite,
    validate_weights,
    yosida_gradient,
)
from .drivers import (
    PathBundle,
    TimeGrid,
    backward_ito,
    forward_ito,
    generate_paths,
    load_a_table,
    stratonovich_backward,
)
from .field import (
    FieldEstimate,
    FieldGrid,
    boundary_residual,
    continuity_diagnostic,
    interior_residual,
    manufactured_field,
    sample_field,
)
from .flow import FlowSample, FlowSpec, flow, flow_inverse, transform_coefficients, transform_penalized
from .reflected import (
    DomainSpec,
    ReflectedPath,
    boundary_band,
    boundary_inequality_check,
    ellipsoid,
    generator_apply,
    local_time_identity_residual,
    local_time_support_fraction,
    make_domain,
    normal_derivative,
    simulate_reflected,
    smoothed_interval,
    unit_ball,
)
from .scenarios import Scenario, ScenarioError, load_scenario
from .solver import (
    BdsdeSolution,
    CoefficientSet,
    SolverConfig,
    cauchy_study,
    penalization_diagnostics,
    solve_penalized,
    verify_vi_inclusion,
    weighted_norms,
)

__version__ = "0.1.0"
