from typing import Annotated, Optional

import typer

from app.services.fem.mesh import Mesh1D
from app.services.study.checks import run_checks
from app.services.study.config import StudyConfig
from app.services.study.report import RunReport

from .common import ConfigOption, MeshExpOption, OutOption, SeedOption, execute

OnlyOption = Annotated[
    Optional[list[str]], typer.Option("--only", help="Run only the named checks (repeatable).")
]


def cmd_validate(
    config: ConfigOption = None,
    out: OutOption = None,
    seed: SeedOption = None,
    mesh_exp: MeshExpOption = None,
    only: OnlyOption = None,
):
    """Run the acceptance checks; exits with 1 when any check fails."""

    def _run(config: StudyConfig, mesh: Mesh1D, report: RunReport) -> None:
        run_checks(config, report, only)

    execute("validate", config, out, seed, mesh_exp, _run)
