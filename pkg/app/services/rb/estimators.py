"""A posteriori bounds for reduced solutions of the delta and s problems."""
import logging
from typing import Literal, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from app.errors import ReducedBasisError
from app.services.affine.delta import AffineDecompositionDelta, DeltaConstants, apriori_delta_bound
from app.services.affine.s import RegularizationSpec, discrete_eta
from app.services.fem.linalg import cholesky

from .reduced import ReducedModel, ReducedSolution, residual_norm

logger = logging.getLogger(__name__)


# --- Pydantic Models ---
class EstimatorData(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    constants: Union[DeltaConstants, RegularizationSpec]
    dual_gram_factor: tuple
    eta: float = 1.0
    eta_kind: Literal["eta_free", "discrete"] = "eta_free"
    width: Literal["local", "global"] = "local"


def make_estimator_data(
    model,
    eta_kind: Literal["eta_free", "discrete"] = "eta_free",
    width: Literal["local", "global"] = "local",
) -> EstimatorData:
    """Factor the dual Gram of a detailed model; optionally compute the discrete embedding constant."""
    eta = 1.0
    if eta_kind == "discrete":
        if model.variant != "s_param":
            raise ReducedBasisError("The embedding constant only applies to the s problem")
        grid = model.decomposition.grid
        eta = max(discrete_eta(model.pivot_gram, model.fractional_gram(s, model.kernel.delta)) for s in grid.nodes)
        logger.info("Discrete embedding surrogate eta = %.4g over %d nodes", eta, len(grid.nodes))
    return EstimatorData(
        constants=model.constants,
        dual_gram_factor=cholesky(model.pivot_gram),
        eta=eta,
        eta_kind=eta_kind,
        width=width,
    )


def estimator_delta(rm: ReducedModel, ed: EstimatorData, delta: float, u_N: ReducedSolution) -> float:
    """||r||/alpha_a plus the affine-approximation term, with the norms of the lifted reduced solution."""
    dec = rm.decomposition
    if not isinstance(dec, AffineDecompositionDelta) or not isinstance(ed.constants, DeltaConstants):
        raise ReducedBasisError("estimator_delta needs a delta reduced model and delta constants")
    c = ed.constants
    width = dec.partition.local_width(delta) if ed.width == "local" else dec.partition.max_width
    u_l2 = rm.reduced_norm("L2", u_N.coeffs)
    u_h1 = rm.reduced_norm("H1", u_N.coeffs)
    return residual_norm(rm, delta, u_N) / c.alpha_a + apriori_delta_bound(c, dec.case, width, u_l2, u_h1)


def estimator_s(rm: ReducedModel, ed: EstimatorData, s: float, u_N: ReducedSolution) -> float:
    """eta (||r|| + (rho + C(delta) sigma^(M+1)) ||u_N||_{V_s2})."""
    reg = ed.constants
    if not isinstance(reg, RegularizationSpec):
        raise ReducedBasisError("estimator_s needs a RegularizationSpec")
    u_s2 = rm.reduced_norm("V_s2", u_N.coeffs)
    return ed.eta * (residual_norm(rm, s, u_N) + (reg.rho + reg.interpolation_term) * u_s2)


def estimate(rm: ReducedModel, ed: EstimatorData, param: float, u_N: ReducedSolution) -> float:
    if rm.variant == "delta_param":
        return estimator_delta(rm, ed, param, u_N)
    return estimator_s(rm, ed, param, u_N)


def effectivity(estimate_value: float, true_error: float) -> float:
    if true_error == 0.0:
        return np.inf if estimate_value > 0.0 else 1.0
    return estimate_value / true_error


def dual_norm(ed: EstimatorData, r: np.ndarray) -> float:
    """sqrt(r^T X^{-1} r) with the factored dual Gram."""
    z = scipy.linalg.cho_solve(ed.dual_gram_factor, r)
    return float(np.sqrt(max(float(r @ z), 0.0)))
