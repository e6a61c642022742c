"""Independent reference integrator for single stiffness entries.

Nested adaptive quadrature of the double integral in physical coordinates,
with the exterior layer included directly rather than through its weight.
Slow; meant for validation only.
"""
import logging

import numpy as np
from scipy import integrate

from app.errors import QuadratureError
from app.services.fem.mesh import Mesh1D

from .assembly import QuadratureConfig, snap_delta
from .kernel import KernelSpec

logger = logging.getLogger(__name__)

# accepted ratio between the reported quadrature error and the requested accuracy
_ERROR_BUDGET = 1e4


def entry_scale(mesh: Mesh1D, spec: KernelSpec, delta: float) -> float:
    """Size of a diagonal entry, h^2 gamma(h); sets the absolute accuracy of the oracle."""
    r = min(mesh.h, 0.5 * delta)
    return mesh.h**2 * abs(float(spec.profile(r)))


def _quad(f, lo: float, hi: float, points, tol: float, atol: float) -> float:
    if hi <= lo:
        return 0.0
    inside = sorted({r for p in points if lo < (r := round(float(p), 14)) < hi})
    value, err, *rest = integrate.quad(
        f, lo, hi, points=inside or None, limit=max(400, 4 * len(inside) + 50),
        epsabs=atol, epsrel=tol, full_output=1,
    )
    if not np.isfinite(value) or err > _ERROR_BUDGET * (tol * abs(value) + atol):
        raise QuadratureError(f"Oracle quadrature did not converge on [{lo:.6g}, {hi:.6g}]: err={err:.3g}")
    return value


def oracle_entry(
    mesh: Mesh1D, spec: KernelSpec, i: int, j: int, q: QuadratureConfig = QuadratureConfig()
) -> float:
    """Reference value of A_ij; i, j index interior DoFs like the assembled matrix.

    Inner integrals are accurate relative to the size of a diagonal entry, not to
    their own value, which can be tiny next to the singular point.
    """
    i, j = min(i, j), max(i, j)
    h = mesh.h
    delta = snap_delta(mesh, spec.delta)
    if (j - i) * h > delta + 2.0 * h:
        return 0.0
    nodes = mesh.nodes
    xi_node, xj_node = nodes[i + 1], nodes[j + 1]
    tol = q.oracle_tol
    atol = tol * entry_scale(mesh, spec, delta)

    def hat(center, x):
        return max(0.0, 1.0 - abs(x - center) / h)

    def gamma(r):
        return float(spec.profile(r)) if 0.0 < r < delta else 0.0

    support = (xi_node - h, xj_node + h)
    overlap = (max(xi_node, xj_node) - h, min(xi_node, xj_node) + h)

    def inner(x):
        ui, uj = hat(xi_node, x), hat(xj_node, x)
        f = lambda y: (ui - hat(xi_node, y)) * (uj - hat(xj_node, y)) * gamma(abs(x - y))
        if ui == 0.0 and uj == 0.0:
            lo, hi = max(x - delta, overlap[0]), min(x + delta, overlap[1])
            if lo >= hi:
                return 0.0
            pts = list(nodes) + [x]
            return _quad(f, lo, hi, pts, tol, atol)
        pts = list(nodes)
        return _quad(f, x - delta, x, pts, tol, atol) + _quad(f, x, x + delta, pts, tol, atol)

    x_lo, x_hi = support[0] - delta, support[1] + delta
    breaks = np.concatenate((nodes, nodes - delta, nodes + delta))
    return _quad(inner, x_lo, x_hi, list(breaks), tol, atol)
