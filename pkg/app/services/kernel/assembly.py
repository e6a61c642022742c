"""Stiffness matrices of the truncated nonlocal form on a uniform P1 mesh.

The double integral over the strip |x - y| < delta is split into the part with
both points in Omega and the exterior layer, where the hats vanish:

    A_ij = sum_{E,F} int_E int_F (phi_i(x)-phi_i(y))(phi_j(x)-phi_j(y)) g(|x-y|) dy dx
         + 2 int_Omega phi_i phi_j w(x) dx,      w(x) = int_{y outside Omega} g(|x-y|) dy.

On a uniform grid the element-pair contribution depends only on the offset
m = F - E, so one reference matrix per offset is computed in the scaled
coordinates xi = (x - x_E)/h, rho = (y - x)/h and scattered to every pair.
"""
import logging
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from pydantic import BaseModel, ConfigDict, model_validator
from scipy import integrate

from app.errors import AssemblyError, KernelError, QuadratureError
from app.services.fem.assembly import assemble_mass
from app.services.fem.linalg import freeze
from app.services.fem.mesh import Mesh1D

from .kernel import KernelSpec, kernel_mass, splitting_constant

logger = logging.getLogger(__name__)

# Gauss points for the smooth exterior weights on elements away from the boundary
_EXTERIOR_ORDER = 12


class QuadratureConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    outer_order: int = 4
    singular_split_levels: int = 8
    oracle_tol: float = 1e-10

    @model_validator(mode="after")
    def _check(self):
        if self.outer_order < 2:
            raise QuadratureError(f"outer_order must be at least 2, got {self.outer_order}")
        if self.singular_split_levels < 1:
            raise QuadratureError(f"singular_split_levels must be at least 1, got {self.singular_split_levels}")
        return self


def snap_delta(mesh: Mesh1D, delta: float) -> float:
    """Round delta to the nearest multiple of h.

    Radii that reach across the whole domain never truncate an element pair and
    are returned unchanged, as is the infinite radius.
    """
    if math.isinf(delta) or delta >= mesh.diam:
        return delta
    k = round(delta / mesh.h)
    if k < 1:
        raise AssemblyError(f"delta={delta} is below the mesh size h={mesh.h} and cannot be snapped")
    snapped = k * mesh.h
    if abs(snapped - delta) > 1e-12 * delta:
        logger.debug("Snapped delta %.6g to %.6g (h=%.3g)", delta, snapped, mesh.h)
    return snapped


# --- Quadrature rules ---
def _gauss01(order: int):
    x, w = leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _graded_rule(order: int, levels: int, ends: tuple[int, ...]):
    """Composite Gauss rule on [0, 1] refined geometrically (ratio 1/2) toward the given ends."""
    gx, gw = _gauss01(order)
    if not ends:
        return gx, gw
    length = 0.5 if len(ends) == 2 else 1.0
    breaks = length * np.concatenate(([0.0], 2.0 ** -np.arange(levels, -1, -1, dtype=float)))
    widths = np.diff(breaks)
    x = (breaks[:-1, None] + widths[:, None] * gx[None, :]).ravel()
    w = (widths[:, None] * gw[None, :]).ravel()
    pieces = []
    if 0 in ends:
        pieces.append((x, w))
    if 1 in ends:
        pieces.append((1.0 - x, w))
    return np.concatenate([p[0] for p in pieces]), np.concatenate([p[1] for p in pieces])


def _singular_ends(m: int) -> tuple[int, ...]:
    if m == 0:
        return (0, 1)
    if m in (1, 2):
        return (1,)
    if m in (-1, -2):
        return (0,)
    return ()


# --- Element-pair reference matrices ---
def _pair_shapes(m: int):
    """Local nodes of an element pair at offset m and the split diff_k = d_k(xi) - g_k rho.

    Node 0, 1 belong to the element of x; node m, m+1 to the element of y.
    """
    nodes = sorted({0, 1, m, m + 1})
    coef = np.zeros((len(nodes), 4))  # c0 and c1 of the hat on E, then on F
    for k, node in enumerate(nodes):
        if node == 0:
            coef[k, 0:2] = (1.0, -1.0)
        if node == 1:
            coef[k, 0:2] = (0.0, 1.0)
        if node == m:
            coef[k, 2:4] = (1.0, -1.0)
        if node == m + 1:
            coef[k, 2:4] = (0.0, 1.0)
    d0 = coef[:, 0] - coef[:, 2] + coef[:, 3] * m
    d1 = coef[:, 1] - coef[:, 3]
    g = coef[:, 3]
    return np.array(nodes), d0, d1, g


def _antiderivative(t: np.ndarray, p: int, s: float) -> np.ndarray:
    e = p - 2.0 * s
    if abs(e) < 1e-12:
        return np.log(t)
    return np.power(t, e) / e


def _moment(lo: np.ndarray, hi: np.ndarray, p: int, s: float) -> np.ndarray:
    """int_lo^hi rho^p |rho|^(-1-2s) drho for intervals on one side of zero."""
    out = np.zeros_like(lo)
    valid = hi > lo
    pos = valid & (lo >= 0.0)
    neg = valid & (hi <= 0.0)
    out[pos] = _antiderivative(hi[pos], p, s) - _antiderivative(lo[pos], p, s)
    out[neg] = (-1.0) ** p * (_antiderivative(-lo[neg], p, s) - _antiderivative(-hi[neg], p, s))
    return out


def _numeric_moment(spec: KernelSpec, h: float, lo: float, hi: float, p: int) -> float:
    if hi <= lo:
        return 0.0
    f = lambda r: r**p * spec.profile(h * abs(r))
    if lo < 0.0 < hi:
        return _numeric_moment(spec, h, lo, 0.0, p) + _numeric_moment(spec, h, 0.0, hi, p)
    value, _ = integrate.quad(f, lo, hi, limit=200, epsabs=1e-15, epsrel=1e-12)
    return value


def _pair_reference(m: int, spec: KernelSpec, h: float, D: float, q: QuadratureConfig):
    nodes, d0, d1, g = _pair_shapes(m)
    xi, w = _graded_rule(q.outer_order, q.singular_split_levels, _singular_ends(m))
    lo = np.maximum(m - xi, -D)
    hi = np.minimum(m + 1.0 - xi, D)
    if spec.family == "fractional_truncated":
        s = spec.s
        if m == 0:
            J2 = _antiderivative(-lo, 2, s) + _antiderivative(hi, 2, s)
        else:
            J0, J1, J2 = (_moment(lo, hi, p, s) for p in range(3))
    else:
        moments = np.array(
            [[_numeric_moment(spec, h, a, b, p) for a, b in zip(lo, hi)] for p in range(3)]
        )
        J0, J1, J2 = moments
    ref = np.outer(g, g) * np.sum(w * J2)
    # the d_k vanish identically on coincident elements
    if m != 0:
        d = d0[:, None] + d1[:, None] * xi[None, :]
        ref += (d * (w * J0)) @ d.T
        cross = d @ (w * J1)
        ref -= np.outer(cross, g) + np.outer(g, cross)
    return nodes, ref


# --- Exterior layer ---
def _exterior_local(k: int, spec: KernelSpec, h: float, D: float, q: QuadratureConfig) -> np.ndarray:
    """2x2 matrix int_0^1 psi_a psi_b W(k + u) du, psi = (1 - u, u), for the element at distance k.

    W is the scaled weight of the exterior layer on one side, without the factor 1/s.
    """
    mass = np.array([[1.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 1.0 / 3.0]])
    if spec.family == "fractional_truncated":
        s = spec.s
        if k == 0:
            # only the hat at u = 1 is an interior DoF here; the other entries are dropped later
            local = np.zeros((2, 2))
            local[1, 1] = 1.0 / (3.0 - 2.0 * s)
        else:
            u, w = _gauss01(_EXTERIOR_ORDER)
            vals = w * np.power(k + u, -2.0 * s)
            psi = np.stack((1.0 - u, u))
            local = (psi * vals) @ psi.T
        return local - D ** (-2.0 * s) * mass
    # custom profile: W(t) = 2 h int_{h t}^{delta} profile(r) dr
    if k == 0:
        u, w = _graded_rule(q.outer_order, q.singular_split_levels, (0,))
    else:
        u, w = _gauss01(_EXTERIOR_ORDER)
    weights = np.array([kernel_mass(spec, h * (k + ui), spec.delta) for ui in u])
    psi = np.stack((1.0 - u, u))
    local = (psi * (w * weights)) @ psi.T
    if k == 0:
        local[0, :] = local[:, 0] = 0.0
    return 2.0 * h * local


def _scatter_pairs(full: np.ndarray, starts: np.ndarray, nodes: np.ndarray, local: np.ndarray) -> None:
    idx = starts[:, None] + nodes[None, :]
    np.add.at(full, (idx[:, :, None], idx[:, None, :]), np.broadcast_to(local, (len(starts),) + local.shape))


def assemble_nonlocal(mesh: Mesh1D, spec: KernelSpec, q: QuadratureConfig = QuadratureConfig()) -> np.ndarray:
    """Stiffness matrix A(s, delta) on the interior DoFs for a finite interaction radius."""
    if math.isinf(spec.delta):
        raise AssemblyError("Infinite delta is assembled through assemble_fractional_laplace")
    n, h = mesh.n_el, mesh.h
    delta = snap_delta(mesh, spec.delta)
    D = delta / h
    fractional = spec.family == "fractional_truncated"
    logger.debug("Assembling %s kernel: s=%.4g delta=%.6g n_el=%d", spec.family, spec.s, delta, n)
    if not fractional:
        spec = spec.with_delta(delta)

    pairs = np.zeros((n + 1, n + 1))
    m_max = min(int(math.ceil(D)), n - 1)
    for m in range(-m_max, m_max + 1):
        nodes, ref = _pair_reference(m, spec, h, D, q)
        starts = np.arange(max(0, -m), min(n, n - m))
        _scatter_pairs(pairs, starts, nodes, ref)

    exterior = np.zeros((n + 1, n + 1))
    for k in range(min(int(math.ceil(D)), n)):
        local = _exterior_local(k, spec, h, D, q)
        left = np.array([k, k + 1])
        right = np.array([n - 1 - k, n - k])
        exterior[np.ix_(left, left)] += local
        exterior[np.ix_(right, right)] += local[::-1, ::-1]

    if fractional:
        full = h ** (1.0 - 2.0 * spec.s) * (pairs + exterior / spec.s)
    else:
        full = h * h * pairs + exterior
    A = full[1:-1, 1:-1]
    if not np.all(np.isfinite(A)):
        raise AssemblyError("Assembled stiffness matrix has non-finite entries")
    return freeze(A)


def assemble_fractional_laplace(
    mesh: Mesh1D,
    s: float,
    delta_p: float | None = None,
    q: QuadratureConfig = QuadratureConfig(),
) -> np.ndarray:
    """A(inf, s) = A(delta', s) + C(delta', 1, s) M for any delta' >= diam(Omega)."""
    delta_p = mesh.diam if delta_p is None else delta_p
    if delta_p < mesh.diam:
        raise KernelError(f"Splitting needs delta' >= diam(Omega) = {mesh.diam}, got {delta_p}")
    A = assemble_nonlocal(mesh, KernelSpec(s=s, delta=delta_p), q)
    M = assemble_mass(mesh)
    return freeze(A + splitting_constant(delta_p, 1, s) * M)


def assemble_fractional_gram(
    mesh: Mesh1D,
    s: float,
    delta: float,
    q: QuadratureConfig = QuadratureConfig(),
    delta_p: float | None = None,
) -> np.ndarray:
    """Energy Gram of the fractional kernel at (s, delta); delta may be infinite."""
    if math.isinf(delta):
        return assemble_fractional_laplace(mesh, s, delta_p, q)
    return assemble_nonlocal(mesh, KernelSpec(s=s, delta=delta), q)
