import logging
from pathlib import Path

import numpy as np
import scipy.linalg

from app.errors import SolverError

logger = logging.getLogger(__name__)


def freeze(matrix: np.ndarray) -> np.ndarray:
    """Symmetrize exactly and mark read-only so the matrix can be shared between threads."""
    matrix = np.asarray(matrix, dtype=float)
    sym = 0.5 * (matrix + matrix.T)
    sym.setflags(write=False)
    return sym


def norm(G: np.ndarray, v: np.ndarray) -> float:
    """Gram norm sqrt(v^T G v); tiny negative round-off is clamped to zero."""
    v = np.asarray(v, dtype=float)
    if G.shape != (v.size, v.size):
        raise ValueError(f"Dimension mismatch: Gram {G.shape} vs vector of size {v.size}")
    return float(np.sqrt(max(float(v @ G @ v), 0.0)))


def cholesky(G: np.ndarray):
    """Cholesky factorization usable with scipy.linalg.cho_solve."""
    try:
        return scipy.linalg.cho_factor(G, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SolverError(f"Matrix is not symmetric positive definite: {e}") from e


def is_spd(G: np.ndarray) -> bool:
    try:
        cholesky(G)
        return True
    except SolverError:
        return False


def solve_spd(G: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return scipy.linalg.cho_solve(cholesky(G), rhs)


# --- Matrix export ---
def save_matrix_binary(path: Path, matrix: np.ndarray) -> Path:
    path = Path(path).with_suffix(".npy")
    np.save(path, np.asarray(matrix))
    return path


def save_matrix_text(path: Path, matrix: np.ndarray) -> Path:
    """Write nonzero entries as 'row col value' lines (0-based indices)."""
    path = Path(path)
    rows, cols = np.nonzero(matrix)
    table = np.column_stack((rows, cols, matrix[rows, cols]))
    np.savetxt(
        path,
        table,
        fmt=("%d", "%d", "%.17e"),
        header=f"nlrb matrix {matrix.shape[0]}x{matrix.shape[1]}: row col value",
    )
    return path
