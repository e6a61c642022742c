import logging
from pathlib import Path
from typing import Annotated, Callable, Optional

import typer

from app.errors import EXIT_CHECK_FAILURE, NlrbError
from app.services.fem.mesh import Mesh1D
from app.services.study.config import StudyConfig, apply_overrides, echo, load_config
from app.services.study.report import RunReport

logger = logging.getLogger(__name__)

ConfigOption = Annotated[
    Optional[Path], typer.Option("--config", "-c", help="YAML study configuration; defaults apply when omitted.")
]
OutOption = Annotated[Optional[Path], typer.Option("--out", "-o", help="Output directory for CSVs and report.json.")]
SeedOption = Annotated[Optional[int], typer.Option("--seed", min=0, max=2**64 - 1, help="Seed of the random test sets.")]
MeshExpOption = Annotated[Optional[int], typer.Option("--mesh-exp", help="Use n_el = 2^k elements.")]

Body = Callable[[StudyConfig, Mesh1D, RunReport], None]


def execute(
    command: str,
    config_path: Optional[Path],
    out: Optional[Path],
    seed: Optional[int],
    mesh_exp: Optional[int],
    body: Body,
) -> RunReport:
    """Load and override the config, run the body, write the report; library errors become exit codes."""
    try:
        config = apply_overrides(load_config(config_path), out, seed, mesh_exp)
        report = RunReport(command=command, config=echo(config))
        mesh = config.build_mesh()
        logger.info("nlrb %s: n_el=%d, output %s", command, mesh.n_el, config.out_dir)
        with report.timed("total"):
            body(config, mesh, report)
        report.write(config.out_dir)
    except NlrbError as e:
        logger.error("%s failed: %s", command, e)
        raise typer.Exit(code=e.exit_code) from e
    report.render()
    if not report.passed:
        failed = [c.name for c in report.checks if not c.passed]
        logger.error("%d checks failed: %s", len(failed), ", ".join(failed))
        raise typer.Exit(code=EXIT_CHECK_FAILURE)
    return report
