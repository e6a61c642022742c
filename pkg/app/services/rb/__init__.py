from .basis import ReducedBasis, empty_basis, orthonormalize_append
from .estimators import (
    EstimatorData,
    dual_norm,
    effectivity,
    estimate,
    estimator_delta,
    estimator_s,
    make_estimator_data,
)
from .greedy import GreedyRecord, GreedyTrace, greedy_train, midpoint_parameter, solve_detailed_affine
from .reduced import (
    FORMAT_VERSION,
    ReducedModel,
    ReducedSolution,
    lift,
    model_norm_grams,
    project_model,
    project_reduced,
    residual_norm,
    residual_gap,
    residual_norm_full,
    solve_reduced,
)
