import logging
from typing import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.errors import AssemblyError

logger = logging.getLogger(__name__)


def combine(matrices: Sequence[np.ndarray], theta: np.ndarray) -> np.ndarray:
    """sum_q theta_q A_q, skipping zero coefficients.

    A single unit coefficient returns the anchor object itself, so evaluating
    at an anchor parameter is bitwise exact.
    """
    if len(matrices) != len(theta):
        raise AssemblyError(f"{len(theta)} coefficients for {len(matrices)} matrices")
    acc = None
    for A, t in zip(matrices, theta):
        if t == 0.0:
            continue
        term = A if t == 1.0 else t * A
        acc = term if acc is None else acc + term
    if acc is None:
        return np.zeros_like(matrices[0])
    return acc


class AffineDecomposition(BaseModel):
    """Parameter-separable operator A(mu) = sum_q theta_q(mu) A_q with load theta_f(mu) F."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    matrices: tuple[np.ndarray, ...]
    load: np.ndarray

    @model_validator(mode="after")
    def _check_shapes(self):
        n = self.load.shape[0]
        for q, A in enumerate(self.matrices):
            if A.shape != (n, n):
                raise AssemblyError(f"Affine term {q} has shape {A.shape}, expected {(n, n)}")
        return self

    @property
    def size(self) -> int:
        return self.load.shape[0]

    @property
    def n_terms(self) -> int:
        return len(self.matrices)

    def theta(self, mu: float) -> np.ndarray:
        raise NotImplementedError

    def load_theta(self, mu: float) -> float:
        return 1.0

    def matrix(self, mu: float) -> np.ndarray:
        return combine(self.matrices, self.theta(mu))

    def rhs(self, mu: float) -> np.ndarray:
        return self.load_theta(mu) * self.load
