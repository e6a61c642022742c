from .decomposition import AffineDecomposition, combine
from .delta import (
    AffineDecompositionDelta,
    DeltaConstants,
    DeltaPartition,
    affine_matrix_eval,
    apriori_delta_bound,
    case1_switch_point,
    coeffs_case1,
    coeffs_case2,
    compute_delta_constants,
    lipschitz_solution,
    make_partition,
)
from .s import (
    AffineDecompositionS,
    RegularizationSpec,
    SGrid,
    admissible_eps,
    chebyshev_nodes,
    compute_Cdelta,
    compute_shat,
    compute_sigma,
    default_rho,
    derivative_bound_constant,
    discrete_eta,
    eps_hat,
    lagrange_coefficients,
    log_sup_bound,
    make_regularization,
    regularized_matrix_eval,
    rhs_scale,
    rho_corollary,
    second_bound,
)
