"""Affine-in-delta surrogate: anchor partitions, coefficient rules and constants."""
import logging
import math
from typing import Literal, Optional

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.integrate import trapezoid

from app.errors import AssemblyError, ParameterRangeError, SolverError
from app.services.fem.mesh import Mesh1D
from app.services.kernel.assembly import snap_delta
from app.services.kernel.kernel import KernelSpec, kernel_mass, omega, scaling_constant

from .decomposition import AffineDecomposition, combine

logger = logging.getLogger(__name__)

_RANGE_TOL = 1e-12
_CUSTOM_GRID = 10_000


# --- Pydantic Models ---
class DeltaPartition(BaseModel):
    model_config = ConfigDict(frozen=True)

    anchors: tuple[float, ...]
    kind: Literal["uniform", "graded"] = "uniform"

    @model_validator(mode="after")
    def _check(self):
        if len(self.anchors) < 2:
            raise ParameterRangeError("A partition needs at least two anchors (K >= 1)")
        if np.any(np.diff(self.anchors) <= 0.0):
            raise ParameterRangeError(f"Anchors must be strictly increasing: {self.anchors}")
        if self.anchors[0] <= 0.0:
            raise ParameterRangeError("Anchors must be positive")
        return self

    @property
    def K(self) -> int:
        return len(self.anchors) - 1

    @property
    def delta_min(self) -> float:
        return self.anchors[0]

    @property
    def delta_max(self) -> float:
        return self.anchors[-1]

    @property
    def max_width(self) -> float:
        return float(np.max(np.diff(self.anchors)))

    def bracket(self, delta: float) -> int:
        """Index k of the subinterval [delta_{k-1}, delta_k] containing delta."""
        if not self.delta_min - _RANGE_TOL <= delta <= self.delta_max + _RANGE_TOL:
            raise ParameterRangeError(
                f"delta={delta} outside partition range [{self.delta_min}, {self.delta_max}]"
            )
        k = int(np.searchsorted(self.anchors, delta, side="left"))
        return min(max(k, 1), self.K)

    def local_width(self, delta: float) -> float:
        k = self.bracket(delta)
        return self.anchors[k] - self.anchors[k - 1]

    def bind(self, mesh: Mesh1D) -> "DeltaPartition":
        """Snap the anchors to the mesh; anchors that coincide after snapping are merged."""
        snapped = sorted({snap_delta(mesh, d) for d in self.anchors})
        if len(snapped) < 2:
            raise AssemblyError(f"Partition collapses to one anchor when snapped to h={mesh.h}")
        if len(snapped) < len(self.anchors):
            logger.warning("Snapping to h=%.3g merged anchors: K=%d -> %d", mesh.h, self.K, len(snapped) - 1)
        return DeltaPartition(anchors=tuple(snapped), kind=self.kind)


class DeltaConstants(BaseModel):
    """Constants of the delta estimators; C_P is a discrete surrogate."""

    model_config = ConfigDict(frozen=True)

    C_P: float
    C_gamma: float
    C_gamma1: float
    C_a: float
    L_a: float
    L_aprime: float
    C_aprime: float
    alpha_a: float
    gamma_a: float
    L_gamma: float
    discrete: bool = True


def make_partition(
    delta_min: float, delta_max: float, K: int, kind: Literal["uniform", "graded"] = "uniform"
) -> DeltaPartition:
    if K < 1:
        raise ParameterRangeError(f"K must be at least 1, got {K}")
    if not 0.0 < delta_min < delta_max:
        raise ParameterRangeError(f"Need 0 < delta_min < delta_max, got [{delta_min}, {delta_max}]")
    k = np.arange(K + 1)
    if kind == "uniform":
        anchors = delta_min + k * (delta_max - delta_min) / K
    elif kind == "graded":
        anchors = delta_min * (delta_max / delta_min) ** (k / K)
    else:
        raise ParameterRangeError(f"Unknown partition kind {kind!r}")
    anchors[0], anchors[-1] = delta_min, delta_max
    return DeltaPartition(anchors=tuple(float(a) for a in anchors), kind=kind)


# --- Coefficient rules ---
def _mass_between(lo: float, hi: float, s: float, kernel: Optional[KernelSpec]) -> float:
    if kernel is None or kernel.family == "fractional_truncated":
        return (lo ** (-2.0 * s) - hi ** (-2.0 * s)) / (2.0 * s)
    return kernel_mass(kernel, lo, hi)


def coeffs_case1(
    delta: float, p: DeltaPartition, s: float, kernel: Optional[KernelSpec] = None
) -> np.ndarray:
    """Piecewise-constant rule: pick the bracketing anchor with the smaller kernel mass in between.

    Ties go to the left anchor.
    """
    k = p.bracket(delta)
    left, right = p.anchors[k - 1], p.anchors[k]
    d = min(max(delta, left), right)
    alpha = _mass_between(left, d, s, kernel)
    beta = _mass_between(d, right, s, kernel)
    theta = np.zeros(p.K + 1)
    theta[k - 1 if alpha <= beta else k] = 1.0
    return theta


def case1_switch_point(left: float, right: float, s: float) -> float:
    """delta at which alpha_{k-1} = beta_k for the fractional kernel."""
    return (0.5 * (left ** (-2.0 * s) + right ** (-2.0 * s))) ** (-1.0 / (2.0 * s))


def coeffs_case2(delta: float, p: DeltaPartition) -> np.ndarray:
    """Hat-function rule: linear interpolation between the two bracketing anchors."""
    k = p.bracket(delta)
    left, right = p.anchors[k - 1], p.anchors[k]
    lam = min(max((delta - left) / (right - left), 0.0), 1.0)
    theta = np.zeros(p.K + 1)
    theta[k - 1] = 1.0 - lam
    theta[k] = lam
    return theta


class AffineDecompositionDelta(AffineDecomposition):
    partition: DeltaPartition
    case: Literal["case1", "case2"] = "case2"
    s: float = 0.5
    kernel: Optional[KernelSpec] = None

    @model_validator(mode="after")
    def _one_matrix_per_anchor(self):
        if len(self.matrices) != self.partition.K + 1:
            raise AssemblyError(
                f"{len(self.matrices)} anchor matrices for {self.partition.K + 1} anchors"
            )
        return self

    def theta(self, delta: float) -> np.ndarray:
        if self.case == "case1":
            return coeffs_case1(delta, self.partition, self.s, self.kernel)
        return coeffs_case2(delta, self.partition)

    def load_theta(self, delta: float) -> float:
        return 2.0 / scaling_constant(1, self.s)


def affine_matrix_eval(dec: AffineDecompositionDelta, delta: float) -> np.ndarray:
    return combine(dec.matrices, dec.theta(delta))


# --- Constants ---
def poincare_constant(mass: np.ndarray, pivot: np.ndarray) -> float:
    """sqrt of the largest eigenvalue of M x = lambda A(delta*) x."""
    n = mass.shape[0]
    try:
        lam = scipy.linalg.eigh(mass, pivot, eigvals_only=True, subset_by_index=[n - 1, n - 1])
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SolverError(f"Poincare eigenproblem failed: {e}") from e
    return float(np.sqrt(lam[-1]))


def compute_delta_constants(
    mesh: Mesh1D,
    p: DeltaPartition,
    s: float,
    mass: np.ndarray,
    pivot: np.ndarray,
    kernel: Optional[KernelSpec] = None,
) -> DeltaConstants:
    w0 = omega(1)
    d_min, d_max = p.delta_min, p.delta_max
    if kernel is None or kernel.family == "fractional_truncated":
        C_gamma = d_min ** (-1.0 - 2.0 * s)
        C_gamma1 = (d_min ** (-2.0 * s) - d_max ** (-2.0 * s)) / s
        L_gamma = (1.0 + 2.0 * s) * d_min ** (-2.0 - 2.0 * s)
        g_min, g_max = d_min ** (-1.0 - 2.0 * s), d_max ** (-1.0 - 2.0 * s)
    else:
        r = np.linspace(d_min, d_max, _CUSTOM_GRID)
        g = np.asarray(kernel.profile(r), dtype=float)
        if not np.all(np.isfinite(g)):
            raise SolverError("Custom kernel profile is not finite on [delta_min, delta_max]")
        C_gamma = float(np.max(g))
        C_gamma1 = w0 * float(trapezoid(g, r))
        L_gamma = float(np.max(np.abs(np.diff(g) / np.diff(r))))
        g_min, g_max = float(g[0]), float(g[-1])

    C_P = poincare_constant(mass, pivot)
    four_cp2 = 4.0 * C_P**2
    constants = DeltaConstants(
        C_P=C_P,
        C_gamma=C_gamma,
        C_gamma1=C_gamma1,
        C_a=4.0 * w0 * C_gamma,
        L_a=four_cp2 * C_gamma,
        L_aprime=2.0 * w0 * (2.0 * C_P * L_gamma + g_max),
        C_aprime=4.0 * w0 * g_min,
        alpha_a=1.0 / (1.0 + four_cp2 * C_gamma1),
        gamma_a=1.0 + four_cp2 * C_gamma1,
        L_gamma=L_gamma,
    )
    logger.info("Delta constants (discrete C_P=%.4g): alpha_a=%.4g C_a=%.4g L_a'=%.4g",
                C_P, constants.alpha_a, constants.C_a, constants.L_aprime)
    return constants


def lipschitz_solution(constants: DeltaConstants, C_f: float) -> float:
    """L_u = L_a C_f / C_1 with C_1 = sqrt(alpha_a)."""
    return constants.L_a * C_f / math.sqrt(constants.alpha_a)


def apriori_delta_bound(
    constants: DeltaConstants,
    case: Literal["case1", "case2"],
    width: float,
    u_l2: float,
    u_h1: float,
) -> float:
    """Solution error bound of the affine surrogate for a subinterval of the given width."""
    factor = constants.C_P / constants.alpha_a
    if case == "case1":
        return factor * constants.C_a * width * u_l2
    return factor * constants.L_aprime * width**2 * u_h1
