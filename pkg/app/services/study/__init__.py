from .checks import CHECKS, run_checks
from .config import StudyConfig, apply_overrides, echo, load_config, load_function
from .report import CheckRecord, EmittedFile, RunReport
from .studies import (
    MIRRORS,
    RbRun,
    affine_delta_errors,
    affine_s_errors,
    delta_base_model,
    export_matrices,
    greedy_frame,
    rb_delta_run,
    rb_s_run,
    snapshot_solutions,
)
