import json
import logging
import platform
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd
import pydantic
import scipy
from pydantic import BaseModel, Field
from rich.console import Console
from rich.table import Table

from app import __version__
from app.services.solver.export import write_csv

logger = logging.getLogger(__name__)


# --- Pydantic Models ---
class EmittedFile(BaseModel):
    path: str
    rows: int
    mirrors: str


class CheckRecord(BaseModel):
    name: str
    passed: bool
    measured: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ""


class RunReport(BaseModel):
    command: str
    config: dict[str, Any]
    versions: dict[str, str] = Field(default_factory=lambda: collect_versions())
    timings: dict[str, float] = {}
    files: list[EmittedFile] = []
    checks: list[CheckRecord] = []
    summary: dict[str, Any] = {}

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @contextmanager
    def timed(self, label: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.timings[label] = round(time.perf_counter() - start, 3)
            logger.info("%s took %.1f s", label, self.timings[label])

    def emit_csv(self, out_dir: Path, name: str, frame: pd.DataFrame, mirrors: str) -> Path:
        path = write_csv(Path(out_dir) / name, frame, mirrors)
        self.files.append(EmittedFile(path=str(path), rows=len(frame), mirrors=mirrors))
        return path

    def add_check(self, record: CheckRecord) -> CheckRecord:
        self.checks.append(record)
        level = logging.INFO if record.passed else logging.WARNING
        logger.log(level, "Check %s: %s (%s)", record.name, "pass" if record.passed else "FAIL", record.detail)
        return record

    def write(self, out_dir: Path) -> Path:
        path = Path(out_dir) / "report.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n")
        logger.info("Wrote %s", path)
        return path

    def render(self, console: Optional[Console] = None) -> None:
        console = console or Console()
        files = Table(title=f"nlrb {self.command}: emitted files")
        files.add_column("file")
        files.add_column("rows", justify="right")
        files.add_column("mirrors")
        for f in self.files:
            files.add_row(Path(f.path).name, str(f.rows), f.mirrors)
        console.print(files)
        if self.checks:
            checks = Table(title="checks")
            for column in ("name", "result", "measured", "threshold", "detail"):
                checks.add_column(column)
            for c in self.checks:
                checks.add_row(
                    c.name,
                    "[green]pass[/green]" if c.passed else "[red]FAIL[/red]",
                    _fmt(c.measured),
                    _fmt(c.threshold),
                    c.detail,
                )
            console.print(checks)


def _fmt(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.3g}"


def collect_versions() -> dict[str, str]:
    return {
        "nlrb": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
        "pydantic": pydantic.VERSION,
    }
