import logging
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from app.errors import QuadratureError
from app.services.fem.linalg import freeze
from app.services.fem.mesh import Mesh1D

logger = logging.getLogger(__name__)

# P1 element matrices on the reference element [0, 1]
_LOCAL_MASS = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])
_LOCAL_STIFF = np.array([[1.0, -1.0], [-1.0, 1.0]])


def _scatter(mesh: Mesh1D, local: np.ndarray) -> np.ndarray:
    """Sum one local 2x2 matrix per element into the interior-DoF matrix."""
    n = mesh.n_el
    full = np.zeros((n + 1, n + 1))
    elements = np.arange(n)
    idx = np.stack((elements, elements + 1), axis=1)
    np.add.at(full, (idx[:, :, None], idx[:, None, :]), local[None, :, :])
    return full[1:-1, 1:-1]


def assemble_mass(mesh: Mesh1D) -> np.ndarray:
    return freeze(_scatter(mesh, mesh.h * _LOCAL_MASS))


def assemble_h1_gram(mesh: Mesh1D) -> np.ndarray:
    return freeze(_scatter(mesh, _LOCAL_STIFF / mesh.h))


def _evaluate(F: Callable, x: np.ndarray) -> np.ndarray:
    values = F(x)
    if np.ndim(values) == 0:
        values = np.vectorize(F, otypes=[float])(x)
    values = np.broadcast_to(np.asarray(values, dtype=float), x.shape)
    if not np.all(np.isfinite(values)):
        raise QuadratureError("Load function returned non-finite values")
    return values


def assemble_load(
    mesh: Mesh1D,
    F: Callable[[np.ndarray], np.ndarray],
    jumps: Sequence[float] = (),
    order: int = 4,
) -> np.ndarray:
    """Load vector (F, phi_i) on the interior DoFs.

    Elements containing a jump of F are split there so that piecewise
    smooth loads are integrated without a quadrature error from the kink.
    """
    if order < 3:
        raise QuadratureError(f"Load quadrature order must be at least 3, got {order}")
    gx, gw = leggauss(order)
    gx, gw = 0.5 * (gx + 1.0), 0.5 * gw
    n, h = mesh.n_el, mesh.h
    nodes = mesh.nodes
    full = np.zeros(n + 1)
    for e in range(n):
        cuts = [0.0]
        for x in sorted(jumps):
            t = (x - nodes[e]) / h
            if 0.0 < t < 1.0:
                cuts.append(t)
        cuts.append(1.0)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            xi = lo + (hi - lo) * gx
            w = (hi - lo) * gw * h
            f = _evaluate(F, nodes[e] + h * xi)
            full[e] += np.sum(w * f * (1.0 - xi))
            full[e + 1] += np.sum(w * f * xi)
    return full[1:-1]
