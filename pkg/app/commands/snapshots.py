from app.errors import ConfigError
from app.services.fem.mesh import Mesh1D
from app.services.solver.export import solutions_frame
from app.services.study.config import StudyConfig
from app.services.study.report import RunReport
from app.services.study.studies import MIRRORS, snapshot_solutions

from .common import ConfigOption, MeshExpOption, OutOption, SeedOption, execute


def _run(config: StudyConfig, mesh: Mesh1D, report: RunReport) -> None:
    snap = config.snapshots
    if not snap.deltas or not snap.s_values:
        raise ConfigError("snapshots.deltas and snapshots.s_values must both be nonempty")
    u_delta, u_s = snapshot_solutions(config, mesh)
    out = config.out_dir
    report.emit_csv(out, "snapshots_delta.csv", solutions_frame(mesh, u_delta), MIRRORS["snapshots_delta"])
    report.emit_csv(out, "snapshots_s.csv", solutions_frame(mesh, u_s), MIRRORS["snapshots_s"])


def cmd_snapshots(
    config: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mesh_exp: MeshExpOption = None,
):
    """Solution curves over the delta list at fixed s and over the s list at delta = inf."""
    execute("snapshots", config, out, seed, mesh_exp, _run)
