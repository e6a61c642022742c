from app.services.fem.mesh import Mesh1D
from app.services.study.config import StudyConfig
from app.services.study.report import RunReport
from app.services.study.studies import MIRRORS, affine_delta_errors, delta_base_model, export_matrices

from .common import ConfigOption, MeshExpOption, OutOption, SeedOption, execute


def _run(config: StudyConfig, mesh: Mesh1D, report: RunReport) -> None:
    out = config.out_dir
    pointwise, convergence, slopes = affine_delta_errors(config, mesh)
    report.emit_csv(out, "affine_delta_pointwise.csv", pointwise, MIRRORS["affine_delta_pointwise"])
    report.emit_csv(out, "affine_delta_convergence.csv", convergence, MIRRORS["affine_delta_convergence"])
    report.emit_csv(out, "affine_delta_slopes.csv", slopes, MIRRORS["affine_delta_slopes"])
    report.summary["slopes"] = {f"{r.case}_{r.kind}": r.slope for r in slopes.itertuples()}
    report.summary["resolved_slopes"] = {f"{r.case}_{r.kind}": r.resolved_slope for r in slopes.itertuples()}
    if config.output.matrices != "none":
        paths = export_matrices(config, delta_base_model(config, mesh), min(config.partition.K), out)
        report.summary["matrices"] = [str(p) for p in paths]


def cmd_affine_delta(
    config: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mesh_exp: MeshExpOption = None,
):
    """Errors of the affine-delta surrogate over the training grid for every K, with fitted rates."""
    execute("affine-delta", config, out, seed, mesh_exp, _run)
