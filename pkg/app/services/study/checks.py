"""Acceptance checks run by `nlrb validate`.

Every check returns a CheckRecord; a check that raises is recorded as failed
with the error message, so one broken area does not hide the others.
"""
import logging
import math
import time
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from app.errors import ConfigError, NlrbError
from app.services.affine.delta import (
    AffineDecompositionDelta,
    affine_matrix_eval,
    coeffs_case1,
    coeffs_case2,
    make_partition,
)
from app.services.affine.s import chebyshev_nodes, lagrange_coefficients, log_sup_bound, regularized_matrix_eval
from app.services.fem.mesh import build_mesh
from app.services.kernel.assembly import assemble_fractional_laplace, assemble_nonlocal
from app.services.kernel.kernel import KernelSpec
from app.services.kernel.oracle import oracle_entry
from app.services.rb import greedy_train, project_model, residual_gap, solve_reduced

from .config import StudyConfig
from .report import CheckRecord, RunReport
from .studies import (
    affine_delta_errors,
    affine_s_errors,
    delta_base_model,
    delta_model_for,
    rb_delta_run,
    rb_s_run,
    s_models,
)

logger = logging.getLogger(__name__)

CHECKS: dict[str, Callable[["ValidationContext"], list[CheckRecord]]] = {}


def check(name: str):
    def register(fn):
        CHECKS[name] = fn
        return fn

    return register


class ValidationContext:
    """Shared state of one validation run; expensive runs are computed at most once."""

    def __init__(self, config: StudyConfig):
        self.config = config
        self.mesh = config.build_mesh()
        self.rng = np.random.default_rng(config.sets.seed)
        self._cache: dict[str, object] = {}

    def once(self, key: str, fn: Callable[[], object]):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def affine_delta(self):
        return self.once("affine_delta", lambda: affine_delta_errors(self.config, self.mesh))

    def rb_runs(self):
        g = self.config.greedy
        return self.once(
            "rb",
            lambda: (rb_delta_run(self.config, self.mesh, max(g.K)), rb_s_run(self.config, self.mesh, max(g.M))),
        )

    @property
    def anchor_dir(self) -> Path:
        return self.config.out_dir / "anchors"


def _record(name: str, passed: bool, measured=None, threshold=None, detail: str = "") -> CheckRecord:
    return CheckRecord(
        name=name,
        passed=bool(passed),
        measured=None if measured is None else float(measured),
        threshold=None if threshold is None else float(threshold),
        detail=detail,
    )


# --- Affine surrogates ---
@check("affine_delta_rates")
def _affine_delta_rates(ctx: ValidationContext) -> list[CheckRecord]:
    _, _, slopes = ctx.affine_delta()
    bands = {("case1", "uniform"): (0.75, 1.25), ("case2", "uniform"): (1.7, 2.3)}
    start = ctx.config.partition.rate_from
    records = []
    for (case, kind), (lo, hi) in bands.items():
        row = slopes[(slopes["case"] == case) & (slopes["kind"] == kind)].iloc[0]
        slope, full = float(row["resolved_slope"]), float(row["slope"])
        records.append(
            _record(f"affine_delta_rate_{case}", lo <= slope <= hi, slope, lo if slope < lo else hi,
                    f"slope {slope:.3f} on delta >= {start:g} ({full:.3f} over the whole range), accepted [{lo}, {hi}]")
        )
    return records


@check("graded_superiority")
def _graded_superiority(ctx: ValidationContext) -> list[CheckRecord]:
    _, conv, _ = ctx.affine_delta()
    case2 = conv[conv["case"] == "case2"]
    uniform = case2[case2["kind"] == "uniform"].set_index("K")["max_error"]
    graded = case2[case2["kind"] == "graded"].set_index("K")["max_error"]
    ratio = float((graded / uniform).max())
    worse = [int(K) for K in uniform.index if graded[K] > uniform[K]]
    return [_record("graded_superiority", not worse, ratio, 1.0, f"graded worse for K={worse}" if worse else "")]


@check("affine_s_decay")
def _affine_s_decay(ctx: ValidationContext) -> list[CheckRecord]:
    _, conv, rate = ctx.once("affine_s", lambda: affine_s_errors(ctx.config, ctx.mesh))
    floor = 0.5 * math.log(2.0)
    records = [_record("affine_s_rate", rate >= floor, rate, floor, "fitted exponential rate per unit M")]
    errors = conv.set_index("M")["max_error"]
    if 4 in errors.index and 16 in errors.index:
        ratio = errors[16] / errors[4] if errors[4] > 0.0 else 0.0
        records.append(_record("affine_s_ratio_16_4", ratio <= 1e-2 or errors[16] <= 1e-12, ratio, 1e-2))
    baseline = _constant_surrogate_error(ctx)
    m0 = float(errors[0])
    records.append(
        _record("affine_s_constant_baseline", abs(m0 - baseline) <= 1e-10 * max(baseline, 1.0), abs(m0 - baseline),
                1e-10, "M=0 against a frozen-s solve")
    )
    return records


def _constant_surrogate_error(ctx: ValidationContext) -> float:
    """Max error of the frozen-s surrogate A(s_mid) + rho G_shat, built without the interpolation code."""
    model = s_models(ctx.config, ctx.mesh, [0])[0]
    reg, delta = model.constants, model.kernel.delta
    grid = model.decomposition.grid
    A = model.fractional_gram(grid.nodes[0], delta) + reg.rho * model.fractional_gram(reg.s_hat, delta)
    if model.decomposition.infinite:
        A = A + model.decomposition.theta(grid.nodes[0])[-2] * model.mass
    worst = 0.0
    for s in ctx.config.s_test_set():
        truth = np.linalg.solve(model.fractional_gram(s, delta), model.rhs(s))
        approx = np.linalg.solve(A, model.rhs(s))
        diff = truth - approx
        worst = max(worst, float(np.sqrt(diff @ model.fractional_gram(s, delta) @ diff)))
    return worst


def _stored_anchors(ctx: ValidationContext, partition, s: float) -> list[np.ndarray]:
    """Anchor matrices from the run's anchor directory, assembled and stored on first use."""
    ctx.anchor_dir.mkdir(parents=True, exist_ok=True)
    anchors = []
    for i, d in enumerate(partition.anchors):
        path = ctx.anchor_dir / f"delta_n{ctx.mesh.n_el}_s{s:.6g}_K{partition.K}_{i:02d}.npy"
        if path.exists():
            anchors.append(np.load(path))
        else:
            A = assemble_nonlocal(ctx.mesh, KernelSpec(s=s, delta=d))
            np.save(path, A)
            anchors.append(A)
    return anchors


@check("nodal_exactness")
def _nodal_exactness(ctx: ValidationContext) -> list[CheckRecord]:
    """Surrogates evaluated at anchors give the anchor matrices, and stored anchors match a fresh assembly."""
    config, mesh = ctx.config, ctx.mesh
    k = config.kernel
    partition = make_partition(k.delta_min, k.delta_max, min(config.partition.K)).bind(mesh)
    anchors = tuple(_stored_anchors(ctx, partition, k.s))
    load = np.zeros(mesh.n_el - 1)
    bad = []
    for d in partition.anchors:
        fresh = assemble_nonlocal(mesh, KernelSpec(s=k.s, delta=d))
        for case in ("case1", "case2"):
            dec = AffineDecompositionDelta(matrices=anchors, load=load, partition=partition, case=case, s=k.s)
            if not np.array_equal(affine_matrix_eval(dec, d), fresh):
                bad.append(f"{case}@{d:.4g}")
    records = [
        _record("nodal_exactness_delta", not bad, len(bad), 0, f"mismatch at {bad[:5]}" if bad else str(ctx.anchor_dir))
    ]

    # the mass term of the infinite radius has a nonzero coefficient, so use a finite one
    delta_s = 0.25 if math.isinf(k.delta_s) else k.delta_s
    finite = config.model_copy(update={"kernel": k.model_copy(update={"delta_s": delta_s})})
    M = max(2, min(config.sgrid.M))
    s_dec = s_models(finite, mesh, [M])[M].decomposition
    bad_s = [
        sm for m, sm in enumerate(s_dec.grid.nodes)
        if regularized_matrix_eval(s_dec, sm, rho=0.0) is not s_dec.anchors[m]
    ]
    records.append(_record("nodal_exactness_s", not bad_s, len(bad_s), 0, f"mismatch at {bad_s}" if bad_s else ""))
    return records


@check("splitting_invariance")
def _splitting_invariance(ctx: ValidationContext) -> list[CheckRecord]:
    worst = 0.0
    for s in (1.0 / 3.0, 0.5):
        mats = [assemble_fractional_laplace(ctx.mesh, s, dp) for dp in (1.0, 1.5, 2.0)]
        scale = float(np.max(np.abs(mats[0])))
        worst = max(worst, *(float(np.max(np.abs(A - mats[0]))) / scale for A in mats[1:]))
    return [_record("splitting_invariance", worst <= 1e-8, worst, 1e-8, "delta' in {1, 1.5, 2}, s in {1/3, 1/2}")]


@check("quadrature_fidelity")
def _quadrature_fidelity(ctx: ValidationContext, entries: int = 50, mesh_exp: int = 5) -> list[CheckRecord]:
    """Random stiffness entries against nested adaptive quadrature on a coarse mesh."""
    mesh = build_mesh(ctx.config.mesh.a, ctx.config.mesh.b, 2 ** min(mesh_exp, ctx.config.mesh_exp))
    combos = [(s, d) for s in (1.0 / 3.0, 0.5) for d in (0.25, 1.0)]
    worst, where = 0.0, ""
    n = mesh.n_el - 1
    for t in range(entries):
        s, d = combos[t % len(combos)]
        spec = KernelSpec(s=s, delta=d)
        A = ctx.once(f"quad_{s}_{d}", lambda spec=spec: assemble_nonlocal(mesh, spec))
        i, j = (int(v) for v in ctx.rng.integers(0, n, size=2))
        reference = oracle_entry(mesh, spec, i, j)
        scale = max(abs(reference), 1e-6 * float(np.max(np.abs(A))))
        err = abs(A[i, j] - reference) / scale
        if err > worst:
            worst, where = err, f"s={s:.3g} delta={d} ({i}, {j})"
    return [_record("quadrature_fidelity", worst <= 1e-6, worst, 1e-6, f"worst at {where}, h=2^-{int(math.log2(mesh.n_el))}")]


# --- Reduced basis ---
@check("rb_certification")
def _rb_certification(ctx: ValidationContext) -> list[CheckRecord]:
    records = []
    for run in ctx.rb_runs():
        eff = run.effectivity
        incidents = int((eff["estimate"] < eff["error"]).sum())
        share = incidents / max(len(eff), 1)
        records.append(
            _record(f"certified_{run.label}", share <= 0.02, share, 0.02,
                    f"{incidents} effectivity < 1 incidents of {len(eff)}")
        )
        if incidents:
            logger.warning("%s: %d test points with estimator below the true error", run.label, incidents)
        records.append(_record(f"reproduction_{run.label}", run.reproduction_error <= 1e-10, run.reproduction_error, 1e-10))
    return records


@check("rb_decay_floor")
def _rb_decay_floor(ctx: ValidationContext) -> list[CheckRecord]:
    records = []
    for run in ctx.rb_runs():
        # the Galerkin error against the surrogate is monotone; the exact-truth error sits on the affine floor
        galerkin = run.convergence["max_surrogate_error"].to_numpy()
        slack = 1e-10 * galerkin[0]
        increases = int(np.sum(galerkin[1:] > galerkin[:-1] + slack))
        records.append(
            _record(f"monotone_{run.label}", increases == 0, increases, 0, "surrogate-error increases in N")
        )
        final = float(run.convergence["max_error"].iloc[-1])
        floor = max(run.affine_floor, ctx.config.greedy.tol)
        stop = " (greedy stopped at the training floor)" if run.trace.floor_reached else ""
        records.append(
            _record(f"floor_{run.label}", final <= 3.0 * floor, final / floor, 3.0,
                    f"final {final:.3g} vs affine floor {run.affine_floor:.3g}{stop}")
        )
    return records


@check("offline_online")
def _offline_online(ctx: ValidationContext, repeats: int = 200) -> list[CheckRecord]:
    worst = 0.0
    for run in ctx.rb_runs():
        lo, hi = _param_range(run)
        worst = max(worst, residual_gap(run.model, run.basis, ctx.rng.uniform(lo, hi, 10)))
    return [
        _record("residual_consistency", worst <= 1e-8, worst, 1e-8,
                "online versus full-space residual norms, every N, residuals above 1e-4 of the load"),
        _online_timing(ctx, repeats),
    ]


def _param_range(run) -> tuple[float, float]:
    dec = run.model.decomposition
    if run.model.variant == "delta_param":
        return dec.partition.delta_min, dec.partition.delta_max
    return dec.grid.s_min, dec.grid.s_max


def _online_timing(ctx: ValidationContext, repeats: int) -> CheckRecord:
    """Same N on meshes 2^-5 and 2^-7: online solve time within a factor of two."""
    config = ctx.config
    k = config.kernel
    times = []
    for exp in (5, 7):
        mesh = build_mesh(config.mesh.a, config.mesh.b, 2**exp)
        base = delta_base_model(config, mesh)
        model = delta_model_for(base, config, min(config.partition.K), "uniform", "case2")
        basis, _, _ = greedy_train(model, np.linspace(k.delta_min, k.delta_max, 9), N_max=5, tol=0.0)
        rm = project_model(model, basis)
        params = np.linspace(k.delta_min, k.delta_max, repeats)
        best = math.inf
        for _ in range(5):
            start = time.perf_counter()
            for mu in params:
                solve_reduced(rm, mu)
            best = min(best, time.perf_counter() - start)
        times.append(best)
    ratio = max(times) / min(times)
    return _record("online_timing", ratio <= 2.0, ratio, 2.0, f"h=2^-5: {times[0]:.4f}s, h=2^-7: {times[1]:.4f}s")


# --- Auxiliary bounds and coefficient identities ---
def log_sup_samples(rng: np.random.Generator, samples: int) -> list[tuple[float, int, float]]:
    """Random (alpha, k, delta) with alpha in [0.05, 2], 1 <= k <= 6 and delta in [0.1, 3]."""
    return [
        (float(rng.uniform(0.05, 2.0)), int(rng.integers(1, 7)), float(rng.uniform(0.1, 3.0)))
        for _ in range(samples)
    ]


@check("log_sup_bound")
def _log_sup_bound(ctx: ValidationContext, samples: int = 100, points: int = 10**6) -> list[CheckRecord]:
    worst = 0.0
    t = np.logspace(-300.0, 0.0, points)
    for alpha, k, delta in log_sup_samples(ctx.rng, samples):
        xi = delta * t
        numeric = float(np.max(xi**alpha * np.abs(np.log(xi)) ** k))
        worst = max(worst, numeric / log_sup_bound(alpha, k, delta))
    return [_record("log_sup_bound", worst <= 1.0, worst, 1.0, "max ratio numeric sup / bound")]


@check("coefficient_identities")
def _coefficient_identities(ctx: ValidationContext, samples: int = 1000) -> list[CheckRecord]:
    k = ctx.config.kernel
    worst_pu = 0.0
    for kind in ("uniform", "graded"):
        partition = make_partition(k.delta_min, k.delta_max, 9, kind)
        for d in ctx.rng.uniform(k.delta_min, k.delta_max, samples):
            for theta in (coeffs_case1(d, partition, k.s), coeffs_case2(d, partition)):
                worst_pu = max(worst_pu, abs(theta.sum() - 1.0))
    worst_lag = 0.0
    for M in range(1, 13):
        grid = chebyshev_nodes(k.s_min, k.s_max, M)
        nodes = np.asarray(grid.nodes)
        for s in ctx.rng.uniform(k.s_min, k.s_max, samples // 12 + 1):
            theta = lagrange_coefficients(s, grid)
            for p in range(M + 1):
                worst_lag = max(worst_lag, abs(theta @ nodes**p - s**p))
    return [
        _record("partition_of_unity", worst_pu <= 1e-12, worst_pu, 1e-12),
        _record("lagrange_reproduction", worst_lag <= 1e-10, worst_lag, 1e-10, "s^p for p <= M <= 12"),
    ]


def run_checks(config: StudyConfig, report: RunReport, only: Optional[Sequence[str]] = None) -> RunReport:
    names = list(only) if only else list(CHECKS)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"Unknown checks {unknown}; available: {sorted(CHECKS)}")
    ctx = ValidationContext(config)
    for name in names:
        with report.timed(name):
            try:
                records = CHECKS[name](ctx)
            except NlrbError as e:
                records = [_record(name, False, detail=f"{type(e).__name__}: {e}")]
        for record in records:
            report.add_check(record)
    return report
