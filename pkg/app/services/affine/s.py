"""Affine-in-s surrogate: Chebyshev anchors, Lagrange coefficients and the regularization."""
import logging
import math
from typing import Literal, Optional

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, model_validator

from app.errors import AssemblyError, ParameterRangeError, RegularizationError, SolverError
from app.services.kernel.kernel import scaling_constant, splitting_constant

from .decomposition import AffineDecomposition, combine

logger = logging.getLogger(__name__)

_RANGE_TOL = 1e-12


# --- Pydantic Models ---
class SGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    s_min: float
    s_max: float
    M: int
    nodes: tuple[float, ...]

    @model_validator(mode="after")
    def _check(self):
        if len(self.nodes) != self.M + 1:
            raise ParameterRangeError(f"Expected {self.M + 1} nodes, got {len(self.nodes)}")
        return self

    def contains(self, s: float) -> bool:
        return self.s_min - _RANGE_TOL <= s <= self.s_max + _RANGE_TOL


class RegularizationSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    s_hat: float
    s1: float
    s2: float
    rho: float
    sigma: float
    C_delta: float
    M: int

    @model_validator(mode="after")
    def _coercive(self):
        floor = self.C_delta * self.sigma ** (self.M + 1)
        if not self.rho > floor:
            raise RegularizationError(
                f"rho={self.rho:.4g} must exceed C(delta) sigma^(M+1) = {floor:.4g} for coercivity"
            )
        return self

    def eps_hat(self, s: float) -> float:
        return eps_hat(s, self.s1, self.s2)

    @property
    def interpolation_term(self) -> float:
        """C(delta) sigma^(M+1), the surrogate error level entering the estimators."""
        return self.C_delta * self.sigma ** (self.M + 1)


# --- Anchor grid and coefficients ---
def interval_case(s_min: float, s_max: float) -> Optional[int]:
    """Which interval-size condition holds for [s_min, s_max]: 1, 2 or None."""
    width = s_max - s_min
    if s_min <= 0.5 and width < 0.2:
        return 1
    if s_min > 0.5 and width < (2.0 / 3.0) * (1.0 - s_max):
        return 2
    return None


def chebyshev_nodes(s_min: float, s_max: float, M: int) -> SGrid:
    """Chebyshev maximal points on [s_min, s_max]; M = 0 gives the single midpoint."""
    if not 0.0 < s_min < s_max < 1.0:
        raise ParameterRangeError(f"Need 0 < s_min < s_max < 1, got [{s_min}, {s_max}]")
    if M < 0:
        raise ParameterRangeError(f"M must be non-negative, got {M}")
    if interval_case(s_min, s_max) is None:
        logger.warning("Interval [%g, %g] violates both size conditions; sigma may exceed 1", s_min, s_max)
    mid, half = 0.5 * (s_min + s_max), 0.5 * (s_max - s_min)
    if M == 0:
        return SGrid(s_min=s_min, s_max=s_max, M=0, nodes=(mid,))
    nodes = mid - half * np.cos(np.arange(M + 1) * math.pi / M)
    nodes[0], nodes[-1] = s_min, s_max
    return SGrid(s_min=s_min, s_max=s_max, M=M, nodes=tuple(float(x) for x in nodes))


def lagrange_coefficients(s: float, grid: SGrid) -> np.ndarray:
    """Theta_m(s) = prod_{j != m} (s - s_j) / (s_m - s_j)."""
    if not grid.contains(s):
        raise ParameterRangeError(f"s={s} outside [{grid.s_min}, {grid.s_max}]")
    nodes = np.asarray(grid.nodes)
    theta = np.ones(nodes.size)
    for m in range(nodes.size):
        for j in range(nodes.size):
            if j != m:
                theta[m] *= (s - nodes[j]) / (nodes[m] - nodes[j])
    return theta


# --- Regularization constants ---
def admissible_eps(s_min: float, s_max: float) -> float:
    """Upper bound on eps for the interval-size condition that applies."""
    width = s_max - s_min
    case = interval_case(s_min, s_max)
    if case == 1:
        return 0.5 - 2.5 * width
    if case == 2:
        return 1.0 - s_max - 1.5 * width
    raise RegularizationError(
        f"[{s_min}, {s_max}] is too wide for one Chebyshev surrogate; "
        "subdivide it into subintervals that each satisfy s_max - s_min < 1/5 (s_min <= 1/2) "
        "or s_max - s_min < 2/3 (1 - s_max) (s_min > 1/2)"
    )


def compute_shat(s_min: float, s_max: float, eps: float = 0.0) -> tuple[float, float, float]:
    """Return (s_hat, s1, s2) for the regularization term."""
    bound = admissible_eps(s_min, s_max)
    if not 0.0 <= eps < bound:
        raise RegularizationError(f"eps={eps} must lie in [0, {bound:.4g}) for [{s_min}, {s_max}]")
    s1 = s_min
    if interval_case(s_min, s_max) == 1:
        s2 = s_min + 0.5 - eps
        s_hat = s_min + 0.25 - 0.5 * eps
    else:
        s2 = 1.0 - eps
        s_hat = 0.5 * (s_min + 1.0) - 0.5 * eps
    return s_hat, s1, s2


def eps_hat(s: float, s1: float, s2: float) -> float:
    return s1 + s2 - 2.0 * s


def compute_sigma(grid: SGrid, s1: float, s2: float) -> float:
    e = eps_hat(grid.s_max, s1, s2)
    if e <= 0.0:
        raise RegularizationError(f"eps_hat(s_max) = {e:.4g} must be positive")
    sigma = (grid.s_max - grid.s_min) / (2.0 * e)
    if sigma >= 1.0:
        logger.warning("sigma = %.4g >= 1: no exponential convergence guarantee", sigma)
    return sigma


def compute_Cdelta(delta: float, eps_hat_smin: float) -> float:
    if not 0.0 < delta < math.inf:
        raise ParameterRangeError(f"C(delta) needs a finite positive delta, got {delta}")
    if delta <= 1.0:
        return 4.0 / math.e
    return 4.0 * (math.exp(-1.0) + delta ** (eps_hat_smin + 1.0))


def default_rho(C_delta: float, sigma: float, M: int) -> float:
    if not 0.0 < sigma < 1.0:
        raise RegularizationError(f"No safe default rho for sigma={sigma:.4g}; supply rho explicitly")
    return 2.0 * C_delta * sigma ** (M + 1)


def rho_corollary(C_delta: float) -> float:
    return 2.0 * C_delta


def make_regularization(
    grid: SGrid,
    delta: float,
    eps: float = 0.0,
    rho_rule: Literal["numerics", "corollary", "fixed"] = "numerics",
    rho: Optional[float] = None,
    delta_p: float = 1.0,
) -> RegularizationSpec:
    """Regularization data for a grid; the infinite radius uses C(delta')."""
    s_hat, s1, s2 = compute_shat(grid.s_min, grid.s_max, eps)
    sigma = compute_sigma(grid, s1, s2)
    radius = delta_p if math.isinf(delta) else delta
    C_delta = compute_Cdelta(radius, eps_hat(grid.s_min, s1, s2))
    if rho_rule == "numerics":
        value = default_rho(C_delta, sigma, grid.M)
    elif rho_rule == "corollary":
        value = rho_corollary(C_delta)
    else:
        if rho is None:
            raise RegularizationError("rho_rule 'fixed' needs an explicit rho")
        value = rho
    return RegularizationSpec(s_hat=s_hat, s1=s1, s2=s2, rho=value, sigma=sigma, C_delta=C_delta, M=grid.M)


# --- Decomposition ---
class AffineDecompositionS(AffineDecomposition):
    """Terms: A(s_0) .. A(s_M), then the mass matrix when delta is infinite, then G_shat.

    For the infinite radius the anchors are A(delta', s_m) and the splitting constants
    C(delta', 1, s_m) are interpolated with the same Lagrange coefficients.
    """

    grid: SGrid
    reg: RegularizationSpec
    delta: float
    delta_p: float = 1.0

    @model_validator(mode="after")
    def _layout(self):
        expected = self.grid.M + 1 + (1 if self.infinite else 0) + 1
        if len(self.matrices) != expected:
            raise AssemblyError(f"Expected {expected} terms, got {len(self.matrices)}")
        return self

    @property
    def infinite(self) -> bool:
        return math.isinf(self.delta)

    @property
    def anchors(self) -> tuple[np.ndarray, ...]:
        return self.matrices[: self.grid.M + 1]

    @property
    def mass(self) -> Optional[np.ndarray]:
        return self.matrices[self.grid.M + 1] if self.infinite else None

    @property
    def reg_gram(self) -> np.ndarray:
        return self.matrices[-1]

    def theta(self, s: float, rho: Optional[float] = None) -> np.ndarray:
        lag = lagrange_coefficients(s, self.grid)
        rho = self.reg.rho if rho is None else rho
        parts = [lag]
        if self.infinite:
            split = np.array([splitting_constant(self.delta_p, 1, sm) for sm in self.grid.nodes])
            parts.append([float(lag @ split)])
        parts.append([rho])
        return np.concatenate(parts)

    def load_theta(self, s: float) -> float:
        return 2.0 / scaling_constant(1, s)


def regularized_matrix_eval(dec: AffineDecompositionS, s: float, rho: Optional[float] = None) -> np.ndarray:
    return combine(dec.matrices, dec.theta(s, rho))


def rhs_scale(F_vec: np.ndarray, s: float) -> np.ndarray:
    return (2.0 / scaling_constant(1, s)) * np.asarray(F_vec, dtype=float)


# --- Bounds used for reporting ---
def log_sup_bound(alpha: float, k: int, delta: float) -> float:
    """Bound on sup_{0 <= xi <= delta} xi^alpha |log xi|^k."""
    log_plus = max(math.log(delta), 0.0)
    return (k / (math.e * alpha)) ** k + delta**alpha * log_plus**k


def second_bound(alpha: float, k: int, delta: float) -> float:
    """The coarser factorial form k! (1/(e alpha^k) + delta^(alpha+1))."""
    return math.factorial(k) * (1.0 / (math.e * alpha**k) + delta ** (alpha + 1.0))


def derivative_bound_constant(k: int, eps_hat: float, delta: float) -> float:
    """C(k, eps_hat) bounding the k-th s-derivative of the form."""
    if eps_hat <= 0.0 or delta <= 0.0:
        raise ParameterRangeError("derivative_bound_constant needs eps_hat > 0 and delta > 0")
    return 2.0**k * log_sup_bound(eps_hat, k, delta)


def discrete_eta(gram_low: np.ndarray, gram_s: np.ndarray) -> float:
    """Surrogate embedding constant: sqrt of the largest eigenvalue of A(s_min) x = lambda A(s) x."""
    if gram_low is gram_s or np.array_equal(gram_low, gram_s):
        return 1.0
    # the full generalized solver; the subset driver fails on (nearly) proportional pencils
    try:
        lam = scipy.linalg.eigvalsh(gram_low, gram_s)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise SolverError(f"Embedding eigenproblem failed: {e}") from e
    return float(np.sqrt(max(lam[-1], 0.0)))
