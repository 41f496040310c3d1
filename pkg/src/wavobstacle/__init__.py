"""Minimizing-movement solver for 1D wave equations with obstacles.

Each time step minimizes a strictly convex quadratic over P1 finite element
fields (optionally constrained to lie above an obstacle).  Both the local
Laplacian (s = 1) and the fractional Gagliardo form (0 < s < 1) are
supported.
"""
from .errors import (
    ConfigError,
    IncompatibleFieldError,
    InvalidDomainError,
    MaxIterationsExceeded,
    NoValidActiveSetError,
    NonFiniteValueError,
    OrderOutOfRangeError,
    OutOfRangeTimeError,
    SingularSystemError,
    StepFailure,
    UnknownPresetError,
)
from .evolution import (
    Scenario,
    TrajectoryRecord,
    contact_set,
    energy,
    interpolant_eval,
    run_evolution,
)
from .grid_fem import (
    FieldP1,
    Grid1D,
    OperatorSet,
    assemble_mass,
    assemble_stiffness_fractional,
    assemble_stiffness_local,
    build_grid,
    build_operators,
    gagliardo_seminorm_sq,
    interpolate_function,
)
from .scenario_io import (
    ScenarioConfig,
    build_scenario,
    parse_config,
    preset,
    serialize_config,
    write_outputs,
)
from .step_solver import (
    SolverConfig,
    StepProblem,
    StepResult,
    kkt_residual,
    objective,
    oracle_active_set_solve,
    solve_constrained,
    solve_unconstrained,
)
from .verification import (
    ConvergenceTable,
    StabilizationReport,
    check_energy_monotone,
    check_key_estimate,
    check_variational_inequality,
    check_weak_form_free,
    convergence_study,
    detect_stabilization,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "IncompatibleFieldError",
    "InvalidDomainError",
    "MaxIterationsExceeded",
    "NoValidActiveSetError",
    "NonFiniteValueError",
    "OrderOutOfRangeError",
    "OutOfRangeTimeError",
    "SingularSystemError",
    "StepFailure",
    "UnknownPresetError",
    "Scenario",
    "TrajectoryRecord",
    "contact_set",
    "energy",
    "interpolant_eval",
    "run_evolution",
    "FieldP1",
    "Grid1D",
    "OperatorSet",
    "assemble_mass",
    "assemble_stiffness_fractional",
    "assemble_stiffness_local",
    "build_grid",
    "build_operators",
    "gagliardo_seminorm_sq",
    "interpolate_function",
    "ScenarioConfig",
    "build_scenario",
    "parse_config",
    "preset",
    "serialize_config",
    "write_outputs",
    "SolverConfig",
    "StepProblem",
    "StepResult",
    "kkt_residual",
    "objective",
    "oracle_active_set_solve",
    "solve_constrained",
    "solve_unconstrained",
    "ConvergenceTable",
    "StabilizationReport",
    "check_energy_monotone",
    "check_key_estimate",
    "check_variational_inequality",
    "check_weak_form_free",
    "convergence_study",
    "detect_stabilization",
]
