"""Experiment drivers.

Each driver returns pandas tables; the commands decide where they are written.
Truth solutions for delta are always taken at the mesh-snapped radius, and every
driver shares one Gram cache per problem so a matrix is assembled once per run.
"""
import logging
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from app.services.affine.delta import apriori_delta_bound, make_partition
from app.services.affine.s import chebyshev_nodes
from app.services.fem.linalg import norm, save_matrix_binary, save_matrix_text
from app.services.fem.mesh import Mesh1D
from app.services.kernel.assembly import snap_delta
from app.services.rb import (
    GreedyTrace,
    ReducedBasis,
    ReducedModel,
    effectivity,
    estimate,
    greedy_train,
    lift,
    make_estimator_data,
    project_model,
    solve_detailed_affine,
    solve_reduced,
)
from app.services.solver.detailed import (
    DetailedModel,
    Solution,
    build_delta_model,
    build_s_model,
    error_norm,
    solve_affine_delta,
    solve_exact_delta,
    solve_exact_s,
    solve_regularized_s,
)
from app.tasks.processors import run_sweep

from .config import LoadSection, StudyConfig, load_function

logger = logging.getLogger(__name__)

# CSV header lines naming the experiment each table reproduces
MIRRORS = {
    "snapshots_delta": "solution snapshots u(x; delta) at fixed s",
    "snapshots_s": "solution snapshots u(x; s) at delta = inf",
    "affine_delta_pointwise": "pointwise affine-delta error over the training grid (Case 1, Case 2, Case 2 graded)",
    "affine_delta_convergence": "max affine-delta error versus K, uniform and graded partitions",
    "affine_delta_slopes": "fitted log-log rates of the max affine-delta error, full range and resolved window",
    "affine_s_pointwise": "regularized affine-s error over the test set",
    "affine_s_convergence": "max regularized affine-s error versus M with the sigma^(M+1) reference",
    "rb_delta_convergence": "reduced basis max test error versus N for delta",
    "rb_s_convergence": "reduced basis max relative test error versus N for s",
    "rb_greedy": "greedy training history",
    "rb_effectivity": "estimator effectivity over the test set",
}

AFFINE_DELTA_VARIANTS = (("case1", "uniform"), ("case2", "uniform"), ("case2", "graded"))

# errors below this level are round-off and left out of rate fits
_FIT_FLOOR = 1e-12

# the greedy stops once its training error is this share of the affine floor
_FLOOR_SHARE = 0.1


# --- Pydantic Models ---
class RbRun(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    label: str
    model: DetailedModel
    basis: ReducedBasis
    reduced: ReducedModel
    trace: GreedyTrace
    convergence: pd.DataFrame
    effectivity: pd.DataFrame
    reproduction_error: float
    affine_floor: float


def snap_params(mesh: Mesh1D, params: Sequence[float], unique: bool = True) -> np.ndarray:
    snapped = [snap_delta(mesh, float(d)) for d in params]
    return np.unique(snapped) if unique else np.asarray(snapped)


def fit_slope(x: Sequence[float], y: Sequence[float], log_x: bool = True) -> float:
    """Least-squares slope of log(y) against log(x) (or x); NaN with fewer than two usable points."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    keep = y > _FIT_FLOOR
    if keep.sum() < 2:
        return float("nan")
    xs = np.log(x[keep]) if log_x else x[keep]
    return float(np.polyfit(xs, np.log(y[keep]), 1)[0])


# --- Snapshots ---
def snapshot_solutions(config: StudyConfig, mesh: Mesh1D) -> tuple[list[Solution], list[Solution]]:
    """Truth solutions over the delta list at fixed s and over the s list at delta = inf."""
    snap = config.snapshots
    k = config.kernel
    F, jumps = load_function(snap.load)
    deltas, s_values = list(snap.deltas), list(snap.s_values)
    delta_model = None
    if deltas:
        partition = make_partition(k.delta_min, k.delta_max, 1)
        delta_model = build_delta_model(mesh, k.s, partition, "case2", F, jumps, delta_star=k.delta_star)
    u_delta = run_sweep("snapshots_delta", lambda d: solve_exact_delta(delta_model, d), deltas)
    u_s = []
    if s_values:
        grid = chebyshev_nodes(k.s_min, k.s_max, 0)
        s_model = build_s_model(mesh, float("inf"), grid, F=F, jumps=jumps, delta_p=k.delta_p)
        u_s = run_sweep("snapshots_s", lambda s: solve_exact_s(s_model, s), s_values)
    return u_delta, u_s


# --- Affine delta ---
def delta_base_model(config: StudyConfig, mesh: Mesh1D, load: Optional[LoadSection] = None) -> DetailedModel:
    """Model on the coarsest partition; its Gram cache serves truths and anchors of every K."""
    k = config.kernel
    F, jumps = load_function(load or config.load)
    partition = make_partition(k.delta_min, k.delta_max, 1)
    return build_delta_model(mesh, k.s, partition, "case2", F, jumps, delta_star=k.delta_star)


def delta_model_for(
    base: DetailedModel, config: StudyConfig, K: int, kind: str, case: str, load: Optional[LoadSection] = None
) -> DetailedModel:
    k = config.kernel
    F, jumps = load_function(load or config.load)
    partition = make_partition(k.delta_min, k.delta_max, K, kind).bind(base.mesh)
    anchors = run_sweep(f"anchors_{kind}_K{K}", lambda d: base.fractional_gram(k.s, d), partition.anchors)
    return build_delta_model(
        base.mesh, k.s, partition, case, F, jumps, delta_star=k.delta_star, anchors=anchors
    )


def delta_truths(base: DetailedModel, deltas: Sequence[float]) -> dict[float, Solution]:
    solutions = run_sweep("delta_truth", lambda d: solve_exact_delta(base, d), deltas)
    return {float(d): u for d, u in zip(deltas, solutions)}


def affine_delta_errors(
    config: StudyConfig,
    mesh: Mesh1D,
    variants: Sequence[tuple[str, str]] = AFFINE_DELTA_VARIANTS,
    K_list: Optional[Sequence[int]] = None,
) -> tuple[pd.DataFrame, pd.DataFrame, pd.DataFrame]:
    """Pointwise errors, max error per K and fitted rates of the affine-delta surrogate.

    Near delta_min the solution grows like 1/delta and the error has not reached its
    asymptotic rate at moderate K, so the resolved slope only fits the errors at
    delta >= partition.rate_from.
    """
    K_list = list(K_list or config.partition.K)
    resolved_from = config.partition.rate_from
    base = delta_base_model(config, mesh)
    deltas = snap_params(mesh, config.delta_training_set())
    truths = delta_truths(base, deltas)
    pointwise, convergence = [], []
    for case, kind in variants:
        for K in K_list:
            model = delta_model_for(base, config, K, kind, case)
            partition = model.decomposition.partition

            def error_at(d: float, model=model, partition=partition, case=case):
                truth = truths[float(d)]
                err = error_norm(model, truth, solve_affine_delta(model, d), "V_pivot")
                bound = apriori_delta_bound(
                    model.constants,
                    case,
                    partition.local_width(d),
                    norm(model.mass, truth.coeffs),
                    norm(model.h1_gram, truth.coeffs),
                )
                return err, bound

            results = run_sweep(f"affine_delta_{case}_{kind}_K{K}", error_at, deltas)
            for d, (err, bound) in zip(deltas, results):
                pointwise.append(
                    {"case": case, "kind": kind, "K": K, "K_eff": partition.K, "delta": d,
                     "error": err, "apriori_bound": bound}
                )
            max_error = max(err for err, _ in results)
            resolved = [err for d, (err, _) in zip(deltas, results) if d >= resolved_from]
            resolved_max = max(resolved) if resolved else max_error
            convergence.append(
                {"case": case, "kind": kind, "K": K, "K_eff": partition.K,
                 "width": partition.max_width, "max_error": max_error, "resolved_max_error": resolved_max}
            )
            logger.info("Affine delta %s %s K=%d: max error %.3e (delta >= %g: %.3e)",
                        case, kind, K, max_error, resolved_from, resolved_max)
    pointwise = pd.DataFrame(pointwise, columns=["case", "kind", "K", "K_eff", "delta", "error", "apriori_bound"])
    convergence = pd.DataFrame(
        convergence, columns=["case", "kind", "K", "K_eff", "width", "max_error", "resolved_max_error"]
    )
    grouped = convergence.groupby(["case", "kind"], sort=False)
    # widths are the snapped ones the decomposition actually uses
    slopes = pd.concat(
        [
            grouped.apply(lambda g: fit_slope(g["width"], g["max_error"]), include_groups=False).rename("slope"),
            grouped.apply(
                lambda g: fit_slope(g["width"], g["resolved_max_error"]), include_groups=False
            ).rename("resolved_slope"),
        ],
        axis=1,
    ).reset_index()
    return pointwise, convergence, slopes


def export_matrices(config: StudyConfig, base: DetailedModel, K: int, out_dir: Path) -> list[Path]:
    """Write the anchors of the uniform K partition plus pivot, mass and H1 Grams."""
    fmt = config.output.matrices
    if fmt == "none":
        return []
    save = save_matrix_binary if fmt == "binary" else save_matrix_text
    suffix = ".npy" if fmt == "binary" else ".txt"
    target = Path(out_dir) / "matrices"
    target.mkdir(parents=True, exist_ok=True)
    model = delta_model_for(base, config, K, "uniform", "case2")
    paths = [
        save(target / f"anchor_K{K}_{k:02d}{suffix}", A) for k, A in enumerate(model.decomposition.matrices)
    ]
    for name, A in (("pivot", model.pivot_gram), ("mass", model.mass), ("h1", model.h1_gram)):
        paths.append(save(target / f"{name}{suffix}", A))
    logger.info("Exported %d matrices to %s", len(paths), target)
    return paths


# --- Affine s ---
def s_models(config: StudyConfig, mesh: Mesh1D, M_list: Sequence[int]) -> dict[int, DetailedModel]:
    k, reg = config.kernel, config.regularization
    F, jumps = load_function(config.load)
    models = {}
    for M in sorted(set(M_list)):
        grid = chebyshev_nodes(k.s_min, k.s_max, M)
        models[M] = build_s_model(
            mesh, k.delta_s, grid, reg.eps, reg.rho_rule, reg.rho, F, jumps, delta_p=k.delta_p
        )
    return models


def s_truths(model: DetailedModel, s_values: Sequence[float]) -> dict[float, Solution]:
    solutions = run_sweep("s_truth", lambda s: solve_exact_s(model, s), s_values)
    return {float(s): u for s, u in zip(s_values, solutions)}


def affine_s_errors(
    config: StudyConfig, mesh: Mesh1D, M_list: Optional[Sequence[int]] = None
) -> tuple[pd.DataFrame, pd.DataFrame, float]:
    """Errors of the regularized surrogate for every M (M = 0 always included) and the fitted decay rate."""
    M_list = sorted(set(list(M_list or config.sgrid.M) + [0]))
    models = s_models(config, mesh, M_list)
    truth_model = models[M_list[0]]
    s_test = config.s_test_set()
    truths = s_truths(truth_model, s_test)
    pointwise, convergence = [], []
    for M in M_list:
        model = models[M]

        def error_at(s: float, model=model):
            truth = truths[float(s)]
            err = error_norm(truth_model, truth, solve_regularized_s(model, s), "V_s")
            return err, err / max(norm(truth_model.fractional_gram(s, truth_model.kernel.delta), truth.coeffs), 1e-300)

        results = run_sweep(f"affine_s_M{M}", error_at, s_test)
        for s, (err, rel) in zip(s_test, results):
            pointwise.append({"M": M, "s": s, "error": err, "relative_error": rel})
        reg = model.constants
        convergence.append(
            {"M": M, "max_error": max(e for e, _ in results), "max_relative_error": max(r for _, r in results),
             "rho": reg.rho, "sigma": reg.sigma, "reference": reg.interpolation_term}
        )
        logger.info("Affine s M=%d: max error %.3e (rho=%.3g)", M, convergence[-1]["max_error"], reg.rho)
    pointwise = pd.DataFrame(pointwise, columns=["M", "s", "error", "relative_error"])
    convergence = pd.DataFrame(
        convergence, columns=["M", "max_error", "max_relative_error", "rho", "sigma", "reference"]
    )
    positive = convergence[convergence["M"] > 0]
    rate = -fit_slope(positive["M"], positive["max_error"], log_x=False)
    return pointwise, convergence, rate


# --- Reduced basis ---
def _convergence_rows(model, basis, truths, params, norm_of, label, relative=False) -> list[dict]:
    """Test errors per N against the exact truth, plus the Galerkin error against the surrogate.

    The surrogate error is measured in the energy norm of the surrogate operator, where
    nested Galerkin spaces make it nonincreasing in N.
    """
    dec = model.decomposition
    surrogate = {float(p): solve_detailed_affine(model, p).coeffs for p in np.unique(params)}
    energy = {p: dec.matrix(p) for p in surrogate}
    rows = []
    for N in range(basis.N + 1):
        rm = project_model(model, basis.truncate(N))

        def error_at(p: float, rm=rm):
            u_N = lift(rm.basis, solve_reduced(rm, p))
            G = norm_of(p)
            err = norm(G, truths[float(p)].coeffs - u_N)
            size = norm(G, u_N)
            galerkin = norm(energy[float(p)], surrogate[float(p)] - u_N)
            return err, (err / size if size > 0.0 else float("nan")), galerkin

        results = run_sweep(f"rb_{label}_N{N}", error_at, params)
        row = {"N": N, "max_error": max(e for e, _, _ in results)}
        if relative:
            rel = [r for _, r, _ in results]
            row["max_relative_error"] = float("nan") if np.all(np.isnan(rel)) else float(np.nanmax(rel))
        row["max_surrogate_error"] = max(g for _, _, g in results)
        rows.append(row)
    return rows


def _training_floor(model: DetailedModel, truths: dict[float, Solution], params: Sequence[float]) -> float:
    """Affine-approximation error on the training set in the greedy's pivot norm."""
    gaps = run_sweep(
        "rb_training_floor",
        lambda p: norm(model.pivot_gram, truths[float(p)].coeffs - solve_detailed_affine(model, p).coeffs),
        params,
    )
    return max(gaps)


def _reproduction_error(model: DetailedModel, basis: ReducedBasis, rm: ReducedModel) -> float:
    errors = [
        norm(model.pivot_gram, solve_detailed_affine(model, p).coeffs - lift(basis, solve_reduced(rm, p)))
        for p in basis.chosen_params
    ]
    return max(errors, default=0.0)


def _effectivity_rows(model, rm, ed, truths, params, norm_of) -> list[dict]:
    def at(p: float):
        u_N = solve_reduced(rm, p)
        err = norm(norm_of(p), truths[float(p)].coeffs - lift(rm.basis, u_N))
        est = estimate(rm, ed, p, u_N)
        return err, est

    results = run_sweep("rb_effectivity", at, params)
    return [
        {"param": p, "error": err, "estimate": est, "effectivity": effectivity(est, err)}
        for p, (err, est) in zip(params, results)
    ]


def rb_delta_run(
    config: StudyConfig, mesh: Mesh1D, K: int, base: Optional[DetailedModel] = None
) -> RbRun:
    """Greedy on the training grid, then test errors versus N against the snapped-delta truth."""
    g, p = config.greedy, config.partition
    base = base or delta_base_model(config, mesh)
    model = delta_model_for(base, config, K, p.rb_kind, p.rb_case)
    train = snap_params(mesh, config.delta_training_set())
    test = snap_params(mesh, config.delta_test_set(), unique=False)
    truths = delta_truths(base, np.union1d(train, test) if g.stop_at_floor else np.unique(test))
    floor = _FLOOR_SHARE * _training_floor(model, truths, train) if g.stop_at_floor else None
    basis, rm, trace = greedy_train(model, train, g.N_max, g.tol, g.criterion, floor=floor)
    pivot = lambda _: model.pivot_gram
    affine = run_sweep("rb_delta_floor", lambda d: error_norm(model, truths[float(d)], solve_affine_delta(model, d)), test)
    convergence = pd.DataFrame(_convergence_rows(model, basis, truths, test, pivot, f"delta_K{K}"))
    convergence.insert(0, "K", K)
    convergence["affine_floor"] = max(affine)
    ed = make_estimator_data(model, width="local")
    eff = pd.DataFrame(_effectivity_rows(model, rm, ed, truths, test, pivot))
    eff.insert(0, "label", f"delta_K{K}")
    return RbRun(
        label=f"delta_K{K}", model=model, basis=basis, reduced=rm, trace=trace, convergence=convergence,
        effectivity=eff, reproduction_error=_reproduction_error(model, basis, rm), affine_floor=max(affine),
    )


def rb_s_run(config: StudyConfig, mesh: Mesh1D, M: int, truth_model: Optional[DetailedModel] = None) -> RbRun:
    """Greedy over the s training set; relative errors in V_s as the experiments plot them."""
    g, reg = config.greedy, config.regularization
    model = s_models(config, mesh, [M])[M]
    truth_model = truth_model or model
    train = config.s_training_set()
    floor = _FLOOR_SHARE * _training_floor(model, s_truths(truth_model, train), train) if g.stop_at_floor else None
    basis, rm, trace = greedy_train(model, train, g.N_max, g.tol, g.criterion, floor=floor)
    test = config.s_test_set()
    truths = s_truths(truth_model, test)
    v_s = lambda s: truth_model.fractional_gram(s, truth_model.kernel.delta)
    affine = run_sweep(
        "rb_s_floor", lambda s: error_norm(truth_model, truths[float(s)], solve_regularized_s(model, s), "V_s"), test
    )
    convergence = pd.DataFrame(_convergence_rows(model, basis, truths, test, v_s, f"s_M{M}", relative=True))
    convergence.insert(0, "M", M)
    convergence["affine_floor"] = max(affine)
    ed = make_estimator_data(model, eta_kind=reg.eta)
    eff = pd.DataFrame(_effectivity_rows(model, rm, ed, truths, test, v_s))
    eff.insert(0, "label", f"s_M{M}")
    return RbRun(
        label=f"s_M{M}", model=model, basis=basis, reduced=rm, trace=trace, convergence=convergence,
        effectivity=eff, reproduction_error=_reproduction_error(model, basis, rm), affine_floor=max(affine),
    )


def greedy_frame(runs: Sequence[RbRun]) -> pd.DataFrame:
    frames = []
    for run in runs:
        frame = run.trace.to_frame()
        frame.insert(0, "label", run.label)
        frames.append(frame)
    columns = ["label", "iteration", "selected", "max_error", "basis_size"]
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=columns)
