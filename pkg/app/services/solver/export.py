import logging
from pathlib import Path
from typing import Sequence

import pandas as pd

from app.services.fem.mesh import Mesh1D, prolong

from .detailed import Solution

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12e"


def write_csv(path: Path, frame: pd.DataFrame, mirrors: str) -> Path:
    """CSV with a '# mirrors: ...' comment line, then the column header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# mirrors: {mirrors}\n")
        frame.to_csv(fh, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info("Wrote %s (%d rows)", path, len(frame))
    return path


def solutions_frame(mesh: Mesh1D, solutions: Sequence[Solution]) -> pd.DataFrame:
    """Long table x, value, parameter with both boundary zeros."""
    x = mesh.nodes
    frames = [
        pd.DataFrame({"x": x, "value": prolong(mesh, u.coeffs), "parameter": u.param})
        for u in solutions
    ]
    if not frames:
        return pd.DataFrame(columns=["x", "value", "parameter"])
    return pd.concat(frames, ignore_index=True)


def save_solutions_csv(path: Path, mesh: Mesh1D, solutions: Sequence[Solution], mirrors: str) -> Path:
    return write_csv(path, solutions_frame(mesh, solutions), mirrors)
