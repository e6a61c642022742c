"""Galerkin projection onto a reduced basis with offline/online separation.

Offline, every affine term is projected and the residual representers are
condensed into a triangular factor R with

    ||r(mu)||_{X'} = ||R c(mu, u_N)||,   c = (-theta_1 u_N, ..., -theta_Q u_N, theta_f),

where X is the dual-norm Gram. Online work is then independent of the
detailed dimension.
"""
import logging
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict

from app.errors import ReducedBasisError, SolverError
from app.services.affine.decomposition import AffineDecomposition, combine
from app.services.affine.s import AffineDecompositionS
from app.services.fem.linalg import cholesky, norm, solve_spd
from app.services.solver.detailed import DetailedModel

from .basis import ReducedBasis

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


# --- Pydantic Models ---
class ReducedSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coeffs: np.ndarray
    param: float

    @property
    def N(self) -> int:
        return self.coeffs.shape[0]


class ReducedModel(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    variant: Literal["delta_param", "s_param"]
    decomposition: AffineDecomposition
    basis: ReducedBasis
    reduced_anchors: tuple[np.ndarray, ...]
    reduced_load: np.ndarray
    riesz_blocks: np.ndarray
    riesz_factor: np.ndarray
    norm_grams: dict[str, np.ndarray] = {}

    @property
    def N(self) -> int:
        return self.basis.N

    def reduced_norm(self, tag: str, coeffs: np.ndarray) -> float:
        if self.N == 0:
            return 0.0
        if tag not in self.norm_grams:
            raise ReducedBasisError(f"Reduced model has no {tag!r} Gram; available: {sorted(self.norm_grams)}")
        return norm(self.norm_grams[tag], coeffs)

    def save(self, path: Path) -> Path:
        """Versioned .npz container; the decomposition is supplied again on load."""
        path = Path(path).with_suffix(".npz")
        N = self.N
        arrays = {
            "format_version": np.array(FORMAT_VERSION),
            "variant": np.array(self.variant),
            "basis": self.basis.matrix,
            "chosen_params": np.array(self.basis.chosen_params, dtype=float),
            "reduced_anchors": np.array(self.reduced_anchors).reshape(len(self.reduced_anchors), N, N),
            "reduced_load": self.reduced_load,
            "riesz_blocks": self.riesz_blocks,
            "riesz_factor": self.riesz_factor,
        }
        for tag, gram in self.norm_grams.items():
            arrays[f"gram__{tag}"] = gram
        np.savez(path, **arrays)
        logger.info("Saved reduced model (N=%d) to %s", N, path)
        return path

    @classmethod
    def load(cls, path: Path, decomposition: AffineDecomposition) -> "ReducedModel":
        with np.load(Path(path), allow_pickle=False) as data:
            version = int(data["format_version"])
            if version != FORMAT_VERSION:
                raise ReducedBasisError(f"Unsupported reduced model format {version}, expected {FORMAT_VERSION}")
            anchors = data["reduced_anchors"]
            if anchors.shape[0] != decomposition.n_terms:
                raise ReducedBasisError(
                    f"File holds {anchors.shape[0]} affine terms, decomposition has {decomposition.n_terms}"
                )
            B = data["basis"]
            if B.shape[0] != decomposition.size:
                raise ReducedBasisError(f"Basis dimension {B.shape[0]} does not match {decomposition.size}")
            basis = ReducedBasis(
                dim=B.shape[0],
                vectors=tuple(B[:, i].copy() for i in range(B.shape[1])),
                chosen_params=tuple(float(p) for p in data["chosen_params"]),
            )
            grams = {k.split("__", 1)[1]: data[k] for k in data.files if k.startswith("gram__")}
            return cls(
                variant=str(data["variant"]),
                decomposition=decomposition,
                basis=basis,
                reduced_anchors=tuple(anchors),
                reduced_load=data["reduced_load"],
                riesz_blocks=data["riesz_blocks"],
                riesz_factor=data["riesz_factor"],
                norm_grams=grams,
            )


def _variant(dec: AffineDecomposition) -> str:
    return "s_param" if isinstance(dec, AffineDecompositionS) else "delta_param"


def project_reduced(
    dec: AffineDecomposition,
    basis: ReducedBasis,
    dual_gram: np.ndarray,
    norm_grams: Optional[dict[str, np.ndarray]] = None,
) -> ReducedModel:
    """Offline stage: project every term and condense the residual representers."""
    if basis.dim != dec.size or dual_gram.shape != (dec.size, dec.size):
        raise ReducedBasisError(
            f"Inconsistent dimensions: basis {basis.dim}, decomposition {dec.size}, dual Gram {dual_gram.shape}"
        )
    B = basis.matrix
    images = [A @ B for A in dec.matrices]
    reduced = tuple(B.T @ AB for AB in images)
    terms = np.column_stack(images + [dec.load[:, None]])
    try:
        L = np.linalg.cholesky(dual_gram)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"Dual-norm Gram is not SPD: {e}") from e
    W = scipy.linalg.solve_triangular(L, terms, lower=True)
    R = np.linalg.qr(W, mode="r")
    grams = {tag: B.T @ G @ B for tag, G in (norm_grams or {}).items()}
    logger.debug("Projected %d terms onto N=%d", dec.n_terms, basis.N)
    return ReducedModel(
        variant=_variant(dec),
        decomposition=dec,
        basis=basis,
        reduced_anchors=reduced,
        reduced_load=B.T @ dec.load,
        riesz_blocks=W.T @ W,
        riesz_factor=R,
        norm_grams=grams,
    )


def solve_reduced(rm: ReducedModel, param: float) -> ReducedSolution:
    dec = rm.decomposition
    if rm.N == 0:
        return ReducedSolution(coeffs=np.zeros(0), param=param)
    A_N = combine(rm.reduced_anchors, dec.theta(param))
    f_N = dec.load_theta(param) * rm.reduced_load
    try:
        factor = cholesky(A_N)
    except SolverError as e:
        raise ReducedBasisError(f"Reduced system at {param} is singular: {e}") from e
    return ReducedSolution(coeffs=scipy.linalg.cho_solve(factor, f_N), param=param)


def lift(basis: ReducedBasis, u_N: ReducedSolution | np.ndarray) -> np.ndarray:
    coeffs = u_N.coeffs if isinstance(u_N, ReducedSolution) else np.asarray(u_N, dtype=float)
    return basis.matrix @ coeffs


def _residual_coefficients(rm: ReducedModel, param: float, coeffs: np.ndarray) -> np.ndarray:
    dec = rm.decomposition
    theta = dec.theta(param)
    parts = [-t * coeffs for t in theta]
    parts.append(np.array([dec.load_theta(param)]))
    return np.concatenate(parts)


def residual_norm(rm: ReducedModel, param: float, u_N: ReducedSolution) -> float:
    """Dual norm of the residual from the offline factor; cost independent of the detailed size."""
    c = _residual_coefficients(rm, param, u_N.coeffs)
    return float(np.linalg.norm(rm.riesz_factor @ c))


def residual_norm_full(
    dec: AffineDecomposition, dual_gram: np.ndarray, basis: ReducedBasis, param: float, u_N: ReducedSolution
) -> float:
    """Dual norm of the residual through a full-space Riesz solve."""
    r = dec.rhs(param) - dec.matrix(param) @ lift(basis, u_N)
    z = solve_spd(dual_gram, r)
    return float(np.sqrt(max(r @ z, 0.0)))


def residual_gap(model: DetailedModel, basis: ReducedBasis, params, noise: float = 1e-4) -> float:
    """Largest relative gap between online and full-space residual norms over all N <= basis.N.

    Pairs whose residual is below noise times the N = 0 residual are skipped: there both
    norms are dominated by cancellation in f - A u_N.
    """
    dec, dual = model.decomposition, model.pivot_gram
    worst, compared = 0.0, 0
    for N in range(1, basis.N + 1):
        rm = project_model(model, basis.truncate(N))
        for mu in params:
            u_N = solve_reduced(rm, float(mu))
            full = residual_norm_full(dec, dual, rm.basis, float(mu), u_N)
            if full <= noise * dual_rhs_norm(dec, dual, float(mu)):
                continue
            worst = max(worst, abs(residual_norm(rm, float(mu), u_N) - full) / full)
            compared += 1
    if not compared:
        logger.warning("No residual above the noise level %.1e; nothing to compare", noise)
    return worst


def dual_rhs_norm(dec: AffineDecomposition, dual_gram: np.ndarray, param: float) -> float:
    f = dec.rhs(param)
    return float(np.sqrt(max(f @ solve_spd(dual_gram, f), 0.0)))


def model_norm_grams(model: DetailedModel) -> dict[str, np.ndarray]:
    """Grams whose reduced versions the estimators and error reports need."""
    grams = {"L2": model.mass, "H1": model.h1_gram, "V_pivot": model.pivot_gram}
    if model.variant == "s_param":
        s2 = model.constants.s2
        if s2 >= 1.0:
            logger.warning("s2 = %.4g reaches 1; using the H1 Gram for the V_s2 norm", s2)
            grams["V_s2"] = model.h1_gram
        else:
            grams["V_s2"] = model.fractional_gram(s2, model.kernel.delta)
    return grams


def project_model(model: DetailedModel, basis: ReducedBasis) -> ReducedModel:
    return project_reduced(model.decomposition, basis, model.pivot_gram, model_norm_grams(model))
