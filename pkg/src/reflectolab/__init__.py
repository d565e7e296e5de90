"""Reflected diffusions via the extended Skorokhod problem.

Deterministic constrained-path maps, Euler simulation of reflected SDEs on
orthants, half-lines and valley domains, and variation diagnostics for the
constraining term.
"""

from .domains import (
    DirectionCone,
    GpsOrthant,
    GpsWeights,
    HalfLine,
    ValleyDomain,
    ValleyEsp,
    gps_directions,
)
from .errors import (
    CapacityError,
    CoefficientBoundError,
    ConfigError,
    DomainError,
    GridError,
    IntervalError,
    PartitionError,
    ReflectolabError,
    SpecMismatchError,
    UnsolvableStepError,
)
from .experiments import (
    BlowupResult,
    HittingResult,
    LadderBoundResult,
    LadderTimes,
    McSummary,
    PushVariationResult,
    ValleyDirichletResult,
    alternating_ladder_times,
    hitting_probability_experiment,
    ladder_lower_bound_experiment,
    neighbor_ladder_times,
    push_variation_ensemble,
    valley_dirichlet_experiment,
    variation_blowup_experiment,
)
from .maps import (
    GpsBatchSolver,
    gps_esm_2d_exact,
    gps_esm_discrete,
    gps_step_solver,
    sm_one_dim,
    sm_one_dim_reference,
    valley_esm,
    xi_map,
    xi_map_reference,
)
from .paths import Path, path_from_csv, path_from_json, path_to_csv, path_to_json, uniform_grid
from .sder import (
    CoefficientField,
    EulerConfig,
    PathBundle,
    SderSpec,
    brownian_path,
    constant_coefficients,
    constant_drift,
    driftless_identity,
    euler_sder,
    euler_sder_from_increments,
    exit_index,
    hitting_time,
    linear_drift,
    occupation_fraction,
    truncate_at_exit,
)
from .variation import (
    DirichletReport,
    PartitionLadder,
    VariationReport,
    dirichlet_decompose,
    oscillation,
    p_variation_sum,
    total_variation_ladder,
    variation_report,
)

__version__ = "0.1.0"
