"""Dyadic Bellman lab - maximal operators on measure trees and their Bellman function."""

from .version import LAB_VERSION, FORMAT_VERSION
from .errors import (
    LabError,
    DomainError,
    UsageError,
    CapacityError,
    TreeFormatError,
    InvariantViolationError,
)
from .config import LabConfig, Tolerances, TAU_MEAS, TAU_NUM, TAU_ROOT
from .hashing import canonical_json, digest_bytes, derive_seed, make_rng
from .measure_tree import (
    MeasureTree,
    NodeId,
    build_uniform,
    build_nested_chain,
    default_ring_levels,
    build_random,
    refine_leaf,
    refine_leaves,
    select_subfamily,
    load_tree,
    store_tree,
)
from .stepfn import (
    StepFunction,
    Moments,
    average,
    p_integral,
    moments,
    transfer,
    random_step_function,
    load_function,
    store_function,
)
from .maximal_op import (
    MaximalResult,
    maximal_function,
    check_weak_type,
    check_lp_bound,
    check_bellman_bound,
)
from .bellman_fn import (
    BellmanParams,
    h_p,
    omega_p,
    bellman_value,
    ineq_36_slack,
    young_gap,
    holder_split_slack,
)
from .linearization import (
    Linearization,
    linearize,
    verify_lemma31,
    verify_lemma32,
    reconstruct_maximal,
)
from .sharp_inequalities import (
    FamilySelection,
    verify_thm31,
    verify_thm32,
    verify_cor31,
    verify_310,
    gap_at_beta_star,
    sample_family,
)
from .extremal_search import (
    OptimizeConfig,
    geometric_family,
    fit_geometric,
    eigen_residual,
    family_ratios,
    zero_mass_diagnostics,
    search,
    OptimizeResult,
    optimize,
    brute_force_oracle,
    depth_sweep,
    SweepRow,
)
from .g_construction import (
    GPhi,
    build_g,
    verify_g,
    g_prime,
    residual_split,
    young_diagnostics,
)
from .reports import CheckResult, CsvTable, RunReport
from .suite import run_full_suite

__version__ = LAB_VERSION

__all__ = [
    # Version
    "LAB_VERSION",
    "FORMAT_VERSION",
    # Errors
    "LabError",
    "DomainError",
    "UsageError",
    "CapacityError",
    "TreeFormatError",
    "InvariantViolationError",
    # Configuration and hashing
    "LabConfig",
    "Tolerances",
    "TAU_MEAS",
    "TAU_NUM",
    "TAU_ROOT",
    "canonical_json",
    "digest_bytes",
    "derive_seed",
    "make_rng",
    # Trees
    "MeasureTree",
    "NodeId",
    "build_uniform",
    "default_ring_levels",
    "build_nested_chain",
    "build_random",
    "refine_leaf",
    "refine_leaves",
    "select_subfamily",
    "load_tree",
    "store_tree",
    # Step functions
    "StepFunction",
    "Moments",
    "average",
    "p_integral",
    "moments",
    "transfer",
    "random_step_function",
    "load_function",
    "store_function",
    # Maximal operator
    "MaximalResult",
    "maximal_function",
    "check_weak_type",
    "check_lp_bound",
    "check_bellman_bound",
    # Bellman function
    "BellmanParams",
    "h_p",
    "omega_p",
    "bellman_value",
    "ineq_36_slack",
    "young_gap",
    "holder_split_slack",
    # Linearization
    "Linearization",
    "linearize",
    "verify_lemma31",
    "verify_lemma32",
    "reconstruct_maximal",
    # Sharp inequalities
    "FamilySelection",
    "verify_thm31",
    "verify_thm32",
    "verify_cor31",
    "verify_310",
    "gap_at_beta_star",
    "sample_family",
    # Extremal search
    "OptimizeConfig",
    "geometric_family",
    "fit_geometric",
    "eigen_residual",
    "family_ratios",
    "zero_mass_diagnostics",
    "search",
    "OptimizeResult",
    "optimize",
    "brute_force_oracle",
    "depth_sweep",
    "SweepRow",
    # g_phi
    "GPhi",
    "build_g",
    "verify_g",
    "g_prime",
    "residual_split",
    "young_diagnostics",
    # Reports
    "CheckResult",
    "CsvTable",
    "RunReport",
    "run_full_suite",
]
