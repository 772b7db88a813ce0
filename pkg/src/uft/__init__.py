"""Unbalanced feature transport."""

from .alignment import (
    FeaturePyramid,
    barycentric_warp,
    cycle_loss,
    expand_plan,
    multi_stage_transport,
)
from .errors import UFTError
from .losses import (
    MatchingReport,
    argmax_match_cosine,
    argmax_match_plan,
    contextual_loss,
    feature_consistency_loss,
    matching_report,
    perceptual_distance,
    weighted_objective,
)
from .measures import compute_masses, cosine_cost_matrix
from .oracle import AssignmentResult, brute_force_assignment, uot_projected_gradient
from .seace import (
    AffineMap,
    ModulationPair,
    aggregate_modulation,
    modulate_conditional,
    positional_norm_stats,
    seace_denormalize,
    seace_forward,
    semantic_activation_matrix,
)
from .sinkhorn import (
    SolverOptions,
    TransportSolution,
    dual_objective,
    plan_from_duals,
    primal_objective,
    solve_balanced,
    solve_unbalanced,
)
from .synth import SynthSpec, gen_clustered_pair, gen_pyramid_from_image_grid
from .tensorio import read_tensor, write_tensor

__all__ = [
    "AffineMap",
    "AssignmentResult",
    "FeaturePyramid",
    "MatchingReport",
    "ModulationPair",
    "SolverOptions",
    "SynthSpec",
    "TransportSolution",
    "UFTError",
    "aggregate_modulation",
    "argmax_match_cosine",
    "argmax_match_plan",
    "barycentric_warp",
    "brute_force_assignment",
    "compute_masses",
    "contextual_loss",
    "cosine_cost_matrix",
    "cycle_loss",
    "dual_objective",
    "expand_plan",
    "feature_consistency_loss",
    "gen_clustered_pair",
    "gen_pyramid_from_image_grid",
    "matching_report",
    "modulate_conditional",
    "multi_stage_transport",
    "perceptual_distance",
    "plan_from_duals",
    "positional_norm_stats",
    "primal_objective",
    "read_tensor",
    "seace_denormalize",
    "seace_forward",
    "semantic_activation_matrix",
    "solve_balanced",
    "solve_unbalanced",
    "uot_projected_gradient",
    "weighted_objective",
    "write_tensor",
]
