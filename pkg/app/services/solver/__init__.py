from .detailed import (
    DetailedModel,
    Solution,
    build_delta_model,
    build_s_model,
    error_norm,
    solve_affine_delta,
    solve_exact_delta,
    solve_exact_s,
    solve_linear,
    solve_regularized_s,
)
from .export import save_solutions_csv, solutions_frame, write_csv
