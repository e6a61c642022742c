from typing import Annotated, Optional

import typer

from app import __version__, commands
from app.log import configure_logging
from app.settings import get_settings

app = typer.Typer(
    name="nlrb",
    help="Nonlocal and fractional problems in 1D: affine surrogates in delta and s, and certified reduced bases.",
    no_args_is_help=True,
    add_completion=False,
)

app.add_typer(commands.router)


def _version(value: bool):
    if value:
        typer.echo(f"nlrb {__version__}")
        raise typer.Exit()


@app.callback()
def main(
    log_level: Annotated[Optional[str], typer.Option("--log-level", help="Overrides NLRB_LOG_LEVEL.")] = None,
    version: Annotated[
        bool, typer.Option("--version", callback=_version, is_eager=True, help="Show the version and exit.")
    ] = False,
):
    """
    Reproduce the delta and s studies as CSV files plus a run report.
    """

    configure_logging(log_level or get_settings().log_level)


if __name__ == "__main__":
    app()
