import logging
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from app.errors import BasisRejection, ReducedBasisError

logger = logging.getLogger(__name__)

_REJECT_TOL = 1e-12


# --- Pydantic Models ---
class ReducedBasis(BaseModel):
    """Snapshot basis, orthonormal in the pivot inner product."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dim: int
    vectors: tuple[np.ndarray, ...] = ()
    chosen_params: tuple[float, ...] = ()

    @property
    def N(self) -> int:
        return len(self.vectors)

    @property
    def matrix(self) -> np.ndarray:
        """Basis vectors as columns, shape (dim, N)."""
        if not self.vectors:
            return np.zeros((self.dim, 0))
        return np.column_stack(self.vectors)

    def truncate(self, N: int) -> "ReducedBasis":
        if not 0 <= N <= self.N:
            raise ReducedBasisError(f"Cannot truncate a basis of size {self.N} to {N}")
        return ReducedBasis(dim=self.dim, vectors=self.vectors[:N], chosen_params=self.chosen_params[:N])

    def gram_deviation(self, pivot_gram: np.ndarray) -> float:
        """max |B^T X B - I|, the orthonormality defect."""
        B = self.matrix
        return float(np.max(np.abs(B.T @ pivot_gram @ B - np.eye(self.N)), initial=0.0))


def empty_basis(dim: int) -> ReducedBasis:
    return ReducedBasis(dim=dim)


def orthonormalize_append(
    basis: ReducedBasis, v: np.ndarray, pivot_gram: np.ndarray, param: Optional[float] = None
) -> ReducedBasis:
    """Gram-Schmidt in the pivot inner product, always with a second pass."""
    v = np.asarray(v, dtype=float)
    if v.shape != (basis.dim,):
        raise ReducedBasisError(f"Vector of shape {v.shape} does not match basis dimension {basis.dim}")
    v_norm = float(np.sqrt(max(v @ pivot_gram @ v, 0.0)))
    if v_norm == 0.0:
        raise BasisRejection("Cannot append the zero vector")
    B = basis.matrix
    w = v.copy()
    for _ in range(2):
        w = w - B @ (B.T @ (pivot_gram @ w))
    r = float(np.sqrt(max(w @ pivot_gram @ w, 0.0)))
    if r < _REJECT_TOL * v_norm:
        raise BasisRejection(f"Snapshot at {param} lies in the span of the basis (residual {r / v_norm:.3g})")
    w = w / r
    w.setflags(write=False)
    params = basis.chosen_params + ((float(param),) if param is not None else (float("nan"),))
    return ReducedBasis(dim=basis.dim, vectors=basis.vectors + (w,), chosen_params=params)
