import pandas as pd

from app.services.fem.mesh import Mesh1D
from app.services.study.config import StudyConfig
from app.services.study.report import RunReport
from app.services.study.studies import MIRRORS, delta_base_model, greedy_frame, rb_delta_run, rb_s_run

from .common import ConfigOption, MeshExpOption, OutOption, SeedOption, execute


def _run(config: StudyConfig, mesh: Mesh1D, report: RunReport) -> None:
    out = config.out_dir
    base = delta_base_model(config, mesh)
    delta_runs = [rb_delta_run(config, mesh, K, base) for K in config.greedy.K]
    s_runs = [rb_s_run(config, mesh, M) for M in config.greedy.M]
    runs = delta_runs + s_runs

    report.emit_csv(
        out, "rb_delta_convergence.csv", pd.concat([r.convergence for r in delta_runs], ignore_index=True),
        MIRRORS["rb_delta_convergence"],
    )
    report.emit_csv(
        out, "rb_s_convergence.csv", pd.concat([r.convergence for r in s_runs], ignore_index=True),
        MIRRORS["rb_s_convergence"],
    )
    report.emit_csv(out, "rb_greedy.csv", greedy_frame(runs), MIRRORS["rb_greedy"])
    report.emit_csv(
        out, "rb_effectivity.csv", pd.concat([r.effectivity for r in runs], ignore_index=True),
        MIRRORS["rb_effectivity"],
    )
    models = out / "models"
    models.mkdir(parents=True, exist_ok=True)
    report.summary["models"] = [str(r.reduced.save(models / f"rb_{r.label}")) for r in runs]
    report.summary["runs"] = {
        r.label: {
            "N": r.basis.N,
            "stagnated": r.trace.stagnated,
            "floor_reached": r.trace.floor_reached,
            "training_floor": r.trace.floor,
            "reproduction_error": r.reproduction_error,
            "affine_floor": r.affine_floor,
            "effectivity_incidents": int((r.effectivity["estimate"] < r.effectivity["error"]).sum()),
        }
        for r in runs
    }


def cmd_rb(
    config: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mesh_exp: MeshExpOption = None,
):
    """Greedy reduced bases for delta (per K) and s (per M) with test errors versus N."""
    execute("rb", config, out, seed, mesh_exp, _run)
