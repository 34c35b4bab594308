"""Distributed barycentric-coordinate sensor localization under DoS attacks.

Three anchors with known positions and any number of sensors iterate
toward their true locations using only pairwise distance measurements.
The package provides the classic consensus iteration (diloc), the
attack-resilient abandonment variant (asdiloc), arbitrary denial-of-service
attack schedules, and a numerical verification suite for the convergence
theory, plus a CLI that exports traces, reports, and figures.
"""

from .geometry import (
    AREA_SQ_EPS,
    HULL_REL_EPS,
    BarycentricWeights,
    DegenerateNeighborTriangle,
    GeometryError,
    NegativeSquaredArea,
    NotInConvexHull,
    Point2,
    TriangleDistances,
    barycentric_from_distances,
    distance,
    is_in_convex_hull,
    triangle_area_from_distances,
)
from .network import (
    ANCHOR_IDS,
    InvalidTriangulation,
    NetworkScenario,
    NoTriangulationFound,
    ScenarioError,
    SystemMatrices,
    UnreachableSensor,
    anchor_to_sensor_distance_bound,
    build_system_matrices,
    discover_triangulation,
    find_triangulation_set,
    hop_counts,
    load_scenario,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from .attack import (
    EMPTY_MASK,
    EMPTY_SCHEDULE,
    AttackPeriod,
    AttackSchedule,
    DenialMask,
    HorizonExceeded,
    InvalidParameters,
    ScheduleError,
    UnknownLink,
    denial_mask,
    denial_mask_for_arcs,
    is_active,
    load_schedule,
    random_schedule,
    save_schedule,
    scenario_arcs,
    schedule_from_dict,
    validate_schedule_links,
)
from .localization import (
    ALGORITHMS,
    DIVERGENCE_LIMIT,
    EstimateState,
    LocalizationError,
    MaskedMatrices,
    NonFinite,
    RunTrace,
    SingularSystem,
    asdiloc_matrix_step,
    asdiloc_step,
    default_initial_state,
    diloc_step,
    exact_solution,
    masked_matrices,
    max_error,
    read_trace_csv,
    run,
    state_vector,
    write_trace_csv,
)
from .analysis import (
    AnalysisError,
    AugmentedMatrix,
    ReachabilityRelation,
    VerificationReport,
    anchor_feed_identity_residual,
    augmented_at,
    augmented_matrix,
    compose_relations,
    exact_anchor_map,
    gamma_limit_check,
    masked_at,
    product_norm_history,
    product_vanishing_check,
    run_verification,
    sigma_bound,
    window_product_norm,
    window_reachability,
)

__version__ = "0.1.0"
