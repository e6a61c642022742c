"""Detailed (full finite-element) problems for the delta and s parametrizations."""
import logging
import math
import threading
from typing import Callable, Literal, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from pydantic import BaseModel, ConfigDict, PrivateAttr

from app.errors import ParameterRangeError, SolverError
from app.services.affine.delta import (
    AffineDecompositionDelta,
    DeltaConstants,
    DeltaPartition,
    affine_matrix_eval,
    compute_delta_constants,
)
from app.services.affine.s import (
    AffineDecompositionS,
    RegularizationSpec,
    SGrid,
    make_regularization,
    regularized_matrix_eval,
)
from app.services.fem.assembly import assemble_h1_gram, assemble_load, assemble_mass
from app.services.fem.linalg import cholesky, norm
from app.services.fem.mesh import Mesh1D
from app.services.kernel.assembly import (
    QuadratureConfig,
    assemble_fractional_gram,
    assemble_nonlocal,
    snap_delta,
)
from app.services.kernel.kernel import KernelSpec
from app.tasks.processors import run_sweep

logger = logging.getLogger(__name__)

_RESIDUAL_TOL = 1e-12

Variant = Literal["exact_delta", "affine_delta", "exact_s", "regularized_s"]
NormTag = Literal["V_pivot", "V_s", "L2", "H1"]


# --- Pydantic Models ---
class Solution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    coeffs: np.ndarray
    param: float
    variant: Variant
    solver_residual: float


class DetailedModel(BaseModel):
    """Assembled matrices and data of one parametrized problem.

    delta_param: the fractional power is fixed, the interaction radius varies.
    s_param: the radius is fixed (possibly infinite), the fractional power varies.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mesh: Mesh1D
    variant: Literal["delta_param", "s_param"]
    decomposition: Union[AffineDecompositionDelta, AffineDecompositionS]
    pivot_gram: np.ndarray
    mass: np.ndarray
    h1_gram: np.ndarray
    load: np.ndarray
    constants: Union[DeltaConstants, RegularizationSpec]
    kernel: KernelSpec
    q: QuadratureConfig = QuadratureConfig()
    delta_p: Optional[float] = None

    _grams: dict = PrivateAttr(default_factory=dict)
    _lock: threading.Lock = PrivateAttr(default_factory=threading.Lock)

    @property
    def size(self) -> int:
        return self.load.shape[0]

    def fractional_gram(self, s: float, delta: float) -> np.ndarray:
        """A(s, delta), assembled on demand and cached by (s, delta)."""
        if not math.isinf(delta):
            delta = snap_delta(self.mesh, delta)
        key = (float(s), float(delta))
        with self._lock:
            cached = self._grams.get(key)
        if cached is not None:
            return cached
        if self.kernel.family == "custom_radial":
            gram = assemble_nonlocal(self.mesh, self.kernel.with_delta(delta), self.q)
        else:
            gram = assemble_fractional_gram(self.mesh, s, delta, self.q, self.delta_p)
        return self.seed_gram(s, delta, gram)

    def seed_gram(self, s: float, delta: float, gram: np.ndarray) -> np.ndarray:
        with self._lock:
            return self._grams.setdefault((float(s), float(delta)), gram)

    def truth_matrix(self, mu: float) -> np.ndarray:
        if self.variant == "delta_param":
            return self.fractional_gram(self.kernel.s, mu)
        return self.fractional_gram(mu, self.kernel.delta)

    def rhs(self, mu: float) -> np.ndarray:
        return self.decomposition.rhs(mu)


def solve_linear(A: np.ndarray, b: np.ndarray, param: float, variant: Variant) -> Solution:
    """Cholesky solve with one refinement step; the relative residual is recorded."""
    factor = cholesky(A)
    x = scipy.linalg.cho_solve(factor, b)
    b_norm = float(np.linalg.norm(b))
    residual = float(np.linalg.norm(A @ x - b))
    # one refinement step if the direct solve lost accuracy
    if residual > _RESIDUAL_TOL * b_norm:
        x = x + scipy.linalg.cho_solve(factor, b - A @ x)
        residual = float(np.linalg.norm(A @ x - b))
    relative = residual / b_norm if b_norm > 0.0 else residual
    if relative > _RESIDUAL_TOL:
        logger.warning("%s solve at %.6g: relative residual %.3g", variant, param, relative)
    return Solution(coeffs=x, param=param, variant=variant, solver_residual=relative)


def _require(model: DetailedModel, variant: str) -> None:
    if model.variant != variant:
        raise SolverError(f"Operation needs a {variant} model, got {model.variant}")


def solve_exact_delta(model: DetailedModel, delta: float) -> Solution:
    """Truth solve with a freshly assembled A(delta) at the snapped radius."""
    _require(model, "delta_param")
    delta = snap_delta(model.mesh, delta)
    return solve_linear(model.truth_matrix(delta), model.rhs(delta), delta, "exact_delta")


def solve_affine_delta(model: DetailedModel, delta: float) -> Solution:
    _require(model, "delta_param")
    A = affine_matrix_eval(model.decomposition, delta)
    return solve_linear(A, model.rhs(delta), delta, "affine_delta")


def solve_exact_s(model: DetailedModel, s: float) -> Solution:
    _require(model, "s_param")
    if not 0.0 < s < 1.0:
        raise ParameterRangeError(f"s must lie in (0, 1), got {s}")
    return solve_linear(model.truth_matrix(s), model.rhs(s), s, "exact_s")


def solve_regularized_s(model: DetailedModel, s: float, rho: Optional[float] = None) -> Solution:
    _require(model, "s_param")
    A = regularized_matrix_eval(model.decomposition, s, rho)
    try:
        return solve_linear(A, model.rhs(s), s, "regularized_s")
    except SolverError as e:
        raise SolverError(f"Regularized matrix at s={s} is not SPD; sigma >= 1 or rho too small: {e}") from e


def error_norm(
    model: DetailedModel,
    u1: Solution,
    u2: Solution,
    norm_tag: NormTag = "V_pivot",
    s: Optional[float] = None,
) -> float:
    """Gram norm of u1 - u2; V_s is the energy norm at the parameter of u1 unless s is given."""
    diff = np.asarray(u1.coeffs) - np.asarray(u2.coeffs)
    if norm_tag == "V_pivot":
        G = model.pivot_gram
    elif norm_tag == "L2":
        G = model.mass
    elif norm_tag == "H1":
        G = model.h1_gram
    elif norm_tag == "V_s":
        if model.variant == "s_param":
            G = model.fractional_gram(u1.param if s is None else s, model.kernel.delta)
        else:
            G = model.fractional_gram(model.kernel.s if s is None else s, u1.param)
    else:
        raise ValueError(f"Unknown norm {norm_tag!r}")
    return norm(G, diff)


# --- Model factories ---
def build_delta_model(
    mesh: Mesh1D,
    s: float,
    partition: DeltaPartition,
    case: Literal["case1", "case2"] = "case2",
    F: Callable[[np.ndarray], np.ndarray] = lambda x: -np.ones_like(x),
    jumps: Sequence[float] = (),
    q: QuadratureConfig = QuadratureConfig(),
    delta_star: float = 0.5,
    kernel: Optional[KernelSpec] = None,
    anchors: Optional[Sequence[np.ndarray]] = None,
) -> DetailedModel:
    """Assemble anchors A(delta_k), the pivot Gram A(delta*) and the delta constants."""
    kernel = kernel or KernelSpec(s=s, delta=delta_star)
    partition = partition.bind(mesh)
    if anchors is None:
        anchors = run_sweep(
            "delta_anchors",
            lambda d: assemble_nonlocal(mesh, kernel.with_delta(d), q),
            partition.anchors,
        )
    pivot = assemble_nonlocal(mesh, kernel.with_delta(delta_star), q)
    mass = assemble_mass(mesh)
    load = assemble_load(mesh, F, jumps)
    custom = kernel if kernel.family == "custom_radial" else None
    dec = AffineDecompositionDelta(
        matrices=tuple(anchors), load=load, partition=partition, case=case, s=s, kernel=custom
    )
    constants = compute_delta_constants(mesh, partition, s, mass, pivot, custom)
    logger.info("Delta model: K=%d %s %s, n=%d", partition.K, partition.kind, case, load.size)
    model = DetailedModel(
        mesh=mesh,
        variant="delta_param",
        decomposition=dec,
        pivot_gram=pivot,
        mass=mass,
        h1_gram=assemble_h1_gram(mesh),
        load=load,
        constants=constants,
        kernel=kernel,
        q=q,
    )
    model.seed_gram(s, delta_star, pivot)
    for d, A in zip(partition.anchors, anchors):
        model.seed_gram(s, d, A)
    return model


def build_s_model(
    mesh: Mesh1D,
    delta: float,
    grid: SGrid,
    eps: float = 0.0,
    rho_rule: Literal["numerics", "corollary", "fixed"] = "numerics",
    rho: Optional[float] = None,
    F: Callable[[np.ndarray], np.ndarray] = lambda x: -np.ones_like(x),
    jumps: Sequence[float] = (),
    q: QuadratureConfig = QuadratureConfig(),
    delta_p: Optional[float] = None,
) -> DetailedModel:
    """Assemble Chebyshev anchors A(s_m), the regularization Gram and the dual Gram A(s_min)."""
    delta_p = mesh.diam if delta_p is None else delta_p
    infinite = math.isinf(delta)
    radius = delta_p if infinite else snap_delta(mesh, delta)
    reg = make_regularization(grid, delta, eps, rho_rule, rho, delta_p)
    anchors = run_sweep(
        "s_anchors",
        lambda sm: assemble_nonlocal(mesh, KernelSpec(s=sm, delta=radius), q),
        grid.nodes,
    )
    mass = assemble_mass(mesh)
    model_kernel = KernelSpec(s=grid.s_min, delta=delta if infinite else radius)
    terms = list(anchors) + ([mass] if infinite else [])
    reg_gram = assemble_fractional_gram(mesh, reg.s_hat, model_kernel.delta, q, delta_p)
    pivot = assemble_fractional_gram(mesh, grid.s_min, model_kernel.delta, q, delta_p)
    load = assemble_load(mesh, F, jumps)
    dec = AffineDecompositionS(
        matrices=tuple(terms + [reg_gram]), load=load, grid=grid, reg=reg, delta=model_kernel.delta, delta_p=delta_p
    )
    logger.info("s model: M=%d rho=%.4g sigma=%.4g s_hat=%.4g, n=%d", grid.M, reg.rho, reg.sigma, reg.s_hat, load.size)
    model = DetailedModel(
        mesh=mesh,
        variant="s_param",
        decomposition=dec,
        pivot_gram=pivot,
        mass=mass,
        h1_gram=assemble_h1_gram(mesh),
        load=load,
        constants=reg,
        kernel=model_kernel,
        q=q,
        delta_p=delta_p,
    )
    model.seed_gram(reg.s_hat, model_kernel.delta, reg_gram)
    model.seed_gram(grid.s_min, model_kernel.delta, pivot)
    if not infinite:
        for sm, A in zip(grid.nodes, anchors):
            model.seed_gram(sm, radius, A)
    return model
