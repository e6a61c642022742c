"""Greedy snapshot selection over a training set."""
import logging
from typing import Literal, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.errors import BasisRejection, ParameterRangeError, ReducedBasisError
from app.services.fem.linalg import norm
from app.services.solver.detailed import DetailedModel, Solution, solve_affine_delta, solve_regularized_s
from app.tasks.processors import run_sweep

from .basis import ReducedBasis, empty_basis, orthonormalize_append
from .estimators import EstimatorData, estimate, make_estimator_data
from .reduced import ReducedModel, lift, project_model, solve_reduced

logger = logging.getLogger(__name__)

Criterion = Literal["true_error", "estimator"]

# slack for round-off when checking that the max error does not grow
_MONOTONE_SLACK = 1e-12


# --- Pydantic Models ---
class GreedyRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    iteration: int
    selected: float
    max_error: float
    basis_size: int


class GreedyTrace(BaseModel):
    criterion: Criterion
    records: list[GreedyRecord] = []
    stagnated: bool = False
    converged: bool = False
    floor: Optional[float] = None
    floor_reached: bool = False

    @property
    def max_errors(self) -> list[float]:
        return [r.max_error for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [r.model_dump() for r in self.records],
            columns=["iteration", "selected", "max_error", "basis_size"],
        )


def solve_detailed_affine(model: DetailedModel, param: float) -> Solution:
    """The detailed problem the reduced model approximates (affine surrogate, regularized for s)."""
    if model.variant == "delta_param":
        return solve_affine_delta(model, param)
    return solve_regularized_s(model, param)


def _check_training_set(model: DetailedModel, training_set: Sequence[float]) -> list[float]:
    params = [float(p) for p in training_set]
    if not params:
        raise ParameterRangeError("Training set is empty")
    dec = model.decomposition
    for p in params:
        if model.variant == "delta_param":
            dec.partition.bracket(p)
        elif not dec.grid.contains(p):
            raise ParameterRangeError(f"Training parameter {p} outside [{dec.grid.s_min}, {dec.grid.s_max}]")
    return params


def midpoint_parameter(params: Sequence[float]) -> float:
    """Training parameter closest to the middle of the range; ties go to the smaller one."""
    params = np.asarray(params, dtype=float)
    mid = 0.5 * (params.min() + params.max())
    dist = np.abs(params - mid)
    candidates = params[dist == dist.min()]
    return float(candidates.min())


def _argmax(params: list[float], values: np.ndarray) -> int:
    """Index of the largest value; among equal values the smallest parameter wins."""
    best = values.max()
    ties = [i for i, v in enumerate(values) if v == best]
    return min(ties, key=lambda i: params[i])


def greedy_train(
    model: DetailedModel,
    training_set: Sequence[float],
    N_max: int = 20,
    tol: float = 1e-10,
    criterion: Criterion = "true_error",
    estimator_data: Optional[EstimatorData] = None,
    workers: Optional[int] = None,
    floor: Optional[float] = None,
) -> tuple[ReducedBasis, ReducedModel, GreedyTrace]:
    """Grow a basis from detailed affine snapshots until the training error drops below tol.

    With a floor (the affine-approximation error on the training set, in the pivot norm)
    the greedy also stops once its own max error is below it.
    """
    if N_max < 1:
        raise ReducedBasisError(f"N_max must be at least 1, got {N_max}")
    params = _check_training_set(model, training_set)
    pivot = model.pivot_gram

    truths: dict[float, np.ndarray] = {}
    if criterion == "true_error":
        solutions = run_sweep("greedy_truth", lambda p: solve_detailed_affine(model, p), params, workers)
        truths = {p: u.coeffs for p, u in zip(params, solutions)}
    else:
        estimator_data = estimator_data or make_estimator_data(model)

    def snapshot(p: float) -> np.ndarray:
        return truths[p] if p in truths else solve_detailed_affine(model, p).coeffs

    basis = empty_basis(model.size)
    trace = GreedyTrace(criterion=criterion, floor=floor)
    selected = midpoint_parameter(params)
    rm: Optional[ReducedModel] = None

    for iteration in range(1, N_max + 1):
        try:
            basis = orthonormalize_append(basis, snapshot(selected), pivot, selected)
        except BasisRejection as e:
            logger.warning("Greedy stagnated at %.6g: %s", selected, e)
            trace.stagnated = True
            break
        rm = project_model(model, basis)

        def error_at(p: float, rm=rm, basis=basis) -> float:
            u_N = solve_reduced(rm, p)
            if criterion == "true_error":
                return norm(pivot, truths[p] - lift(basis, u_N))
            return estimate(rm, estimator_data, p, u_N)

        errors = np.asarray(run_sweep("greedy_errors", error_at, params, workers))
        worst = _argmax(params, errors)
        max_error = float(errors[worst])
        if trace.records and max_error > trace.records[-1].max_error * (1.0 + _MONOTONE_SLACK) + _MONOTONE_SLACK:
            logger.warning("Greedy max error grew from %.3g to %.3g", trace.records[-1].max_error, max_error)
        trace.records.append(
            GreedyRecord(iteration=iteration, selected=selected, max_error=max_error, basis_size=basis.N)
        )
        logger.info("Greedy %d: selected %.6g, N=%d, max %s %.3e", iteration, selected, basis.N, criterion, max_error)
        if max_error <= tol:
            trace.converged = True
            break
        if floor is not None and max_error <= floor:
            logger.info("Greedy reached the affine floor %.3e at N=%d", floor, basis.N)
            trace.floor_reached = True
            break
        selected = params[worst]
        if selected in basis.chosen_params:
            logger.warning("Greedy stagnated: %.6g is already in the basis with error %.3g > tol", selected, max_error)
            trace.stagnated = True
            break

    if rm is None:
        raise ReducedBasisError("Greedy produced an empty basis")
    return basis, rm, trace
