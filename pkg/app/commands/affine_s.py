from app.services.fem.mesh import Mesh1D
from app.services.study.config import StudyConfig
from app.services.study.report import RunReport
from app.services.study.studies import MIRRORS, affine_s_errors

from .common import ConfigOption, MeshExpOption, OutOption, SeedOption, execute


def _run(config: StudyConfig, mesh: Mesh1D, report: RunReport) -> None:
    out = config.out_dir
    pointwise, convergence, rate = affine_s_errors(config, mesh)
    report.emit_csv(out, "affine_s_pointwise.csv", pointwise, MIRRORS["affine_s_pointwise"])
    report.emit_csv(out, "affine_s_convergence.csv", convergence, MIRRORS["affine_s_convergence"])
    report.summary["rate_per_M"] = rate


def cmd_affine_s(
    config: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mesh_exp: MeshExpOption = None,
):
    """Errors of the regularized Chebyshev surrogate in s over the test set for every M."""
    execute("affine-s", config, out, seed, mesh_exp, _run)
