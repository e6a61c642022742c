import logging
from typing import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from app.errors import MeshError

logger = logging.getLogger(__name__)


# --- Pydantic Models ---
class Mesh1D(BaseModel):
    """Uniform grid on (a, b); hats are extended by zero outside the interval."""

    model_config = ConfigDict(frozen=True)

    a: float
    b: float
    n_el: int

    @model_validator(mode="after")
    def _check(self):
        if not self.a < self.b:
            raise MeshError(f"Invalid interval: a={self.a} must be smaller than b={self.b}")
        if self.n_el < 2:
            raise MeshError(f"At least two elements are required, got n_el={self.n_el}")
        return self

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_el

    @property
    def diam(self) -> float:
        return self.b - self.a

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(self.n_el + 1)

    @property
    def dofs(self) -> "DofMap":
        return DofMap(interior_nodes=tuple(range(1, self.n_el)))


class DofMap(BaseModel):
    model_config = ConfigDict(frozen=True)

    interior_nodes: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.interior_nodes)


def build_mesh(a: float, b: float, n_el: int) -> Mesh1D:
    if n_el <= 0:
        raise MeshError(f"n_el must be positive, got {n_el}")
    mesh = Mesh1D(a=a, b=b, n_el=n_el)
    logger.debug("Built mesh on (%g, %g) with h=%g", a, b, mesh.h)
    return mesh


def interpolate(mesh: Mesh1D, g: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """Nodal interpolant of g restricted to the interior DoFs."""
    return np.asarray(g(mesh.nodes[1:-1]), dtype=float)


def prolong(mesh: Mesh1D, coeffs: np.ndarray) -> np.ndarray:
    """Full nodal vector including the zero values at both endpoints."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (mesh.n_el - 1,):
        raise MeshError(f"Expected {mesh.n_el - 1} interior values, got shape {coeffs.shape}")
    return np.concatenate(([0.0], coeffs, [0.0]))
