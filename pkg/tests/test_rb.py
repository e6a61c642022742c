import numpy as np
import pytest

from app.errors import BasisRejection, ParameterRangeError, ReducedBasisError
from app.services.fem.linalg import norm
from app.services.rb import (
    ReducedModel,
    dual_norm,
    effectivity,
    empty_basis,
    estimate,
    greedy_train,
    lift,
    make_estimator_data,
    midpoint_parameter,
    orthonormalize_append,
    project_model,
    residual_gap,
    residual_norm,
    residual_norm_full,
    solve_detailed_affine,
    solve_reduced,
)
from app.services.solver.detailed import solve_exact_delta

DELTA_TRAIN = np.arange(1, 17) / 16.0


@pytest.fixture(scope="module")
def delta_greedy(delta_model):
    return greedy_train(delta_model, DELTA_TRAIN, N_max=6, tol=1e-12)


@pytest.fixture(scope="module")
def s_greedy(s_model):
    return greedy_train(s_model, np.linspace(1.0 / 3.0, 0.5, 12), N_max=5, tol=1e-12)


# Basis construction
def test_orthonormalize_append(delta_model):
    X = delta_model.pivot_gram
    rng = np.random.default_rng(0)
    basis = empty_basis(delta_model.size)
    for p in (0.0, 0.1, 0.2, 0.3):
        basis = orthonormalize_append(basis, rng.standard_normal(delta_model.size), X, p)
    assert basis.N == 4
    assert basis.gram_deviation(X) < 1e-12
    assert basis.chosen_params == (0.0, 0.1, 0.2, 0.3)
    with pytest.raises(BasisRejection):
        orthonormalize_append(basis, basis.vectors[0] + 2.0 * basis.vectors[1], X)
    with pytest.raises(BasisRejection):
        orthonormalize_append(basis, np.zeros(delta_model.size), X)
    with pytest.raises(ReducedBasisError):
        orthonormalize_append(basis, np.ones(3), X)
    assert basis.truncate(2).N == 2
    with pytest.raises(ReducedBasisError):
        basis.truncate(5)


def test_midpoint_parameter_prefers_smaller_on_tie():
    assert midpoint_parameter([0.0, 0.25, 0.75, 1.0]) == 0.25
    assert midpoint_parameter([0.1, 0.2, 0.9]) == 0.2


# Greedy and projection for the delta problem
def test_delta_greedy_trace(delta_greedy):
    basis, rm, trace = delta_greedy
    assert 1 <= basis.N <= 6
    assert trace.records[0].selected == 0.5
    assert [r.basis_size for r in trace.records] == list(range(1, len(trace.records) + 1))
    assert trace.max_errors[-1] < trace.max_errors[0]
    assert list(trace.to_frame().columns) == ["iteration", "selected", "max_error", "basis_size"]
    assert rm.N == basis.N


def test_reduced_reproduces_snapshots(delta_model, delta_greedy):
    basis, rm, _ = delta_greedy
    for p in basis.chosen_params:
        truth = solve_detailed_affine(delta_model, p).coeffs
        u_N = lift(basis, solve_reduced(rm, p))
        assert norm(delta_model.pivot_gram, truth - u_N) <= 1e-8 * norm(delta_model.pivot_gram, truth)


def test_empty_reduced_model_solves_to_zero(delta_model, delta_greedy):
    basis, _, _ = delta_greedy
    rm0 = project_model(delta_model, basis.truncate(0))
    assert solve_reduced(rm0, 0.5).N == 0
    assert rm0.reduced_norm("L2", np.zeros(0)) == 0.0


def test_offline_residual_matches_full_space(delta_model, delta_greedy):
    basis = delta_greedy[0].truncate(min(3, delta_greedy[0].N))
    rm = project_model(delta_model, basis)
    for d in (0.1, 0.37, 0.8):
        u_N = solve_reduced(rm, d)
        online = residual_norm(rm, d, u_N)
        full = residual_norm_full(delta_model.decomposition, delta_model.pivot_gram, basis, d, u_N)
        assert online == pytest.approx(full, rel=1e-8, abs=1e-12)


# Every basis size, residuals above the noise level only
def test_residual_gap_within_round_off(delta_model, delta_greedy, s_model, s_greedy):
    assert residual_gap(delta_model, delta_greedy[0], [0.07, 0.1, 0.37, 0.8, 0.99]) <= 1e-8
    assert residual_gap(s_model, s_greedy[0], [0.34, 0.4, 0.47]) <= 1e-8


def test_residual_gap_skips_noise(delta_model, delta_greedy):
    assert residual_gap(delta_model, delta_greedy[0], [0.5], noise=1e300) == 0.0


def test_dual_norm_uses_pivot_gram(delta_model):
    ed = make_estimator_data(delta_model)
    r = delta_model.load
    expected = np.sqrt(r @ np.linalg.solve(delta_model.pivot_gram, r))
    assert dual_norm(ed, r) == pytest.approx(expected)


# The delta estimator bounds the error against the exact solution
@pytest.mark.parametrize("delta", [0.125, 0.3125, 0.5625, 0.875])
def test_delta_estimator_is_an_upper_bound(delta_model, delta_greedy, delta):
    basis, rm, _ = delta_greedy
    ed = make_estimator_data(delta_model)
    u_N = solve_reduced(rm, delta)
    err = norm(delta_model.pivot_gram, solve_exact_delta(delta_model, delta).coeffs - lift(basis, u_N))
    est = estimate(rm, ed, delta, u_N)
    assert est >= err
    assert effectivity(est, err) >= 1.0


def test_effectivity_edge_cases():
    assert effectivity(0.0, 0.0) == 1.0
    assert effectivity(1.0, 0.0) == np.inf
    assert effectivity(3.0, 2.0) == 1.5


# The s problem
def test_s_greedy_and_estimator(s_model, s_greedy):
    basis, rm, trace = s_greedy
    assert basis.N >= 1
    assert "V_s2" in rm.norm_grams
    ed = make_estimator_data(s_model)
    for s in (0.35, 0.42, 0.49):
        u_N = solve_reduced(rm, s)
        est = estimate(rm, ed, s, u_N)
        assert np.isfinite(est)
        assert est >= residual_norm(rm, s, u_N)


def test_discrete_eta_needs_s_model(delta_model, s_model):
    with pytest.raises(ReducedBasisError):
        make_estimator_data(delta_model, eta_kind="discrete")
    ed = make_estimator_data(s_model, eta_kind="discrete")
    assert 0.0 < ed.eta <= 1.0 + 1e-10


def test_estimator_criterion_greedy(delta_model):
    basis, _, trace = greedy_train(delta_model, DELTA_TRAIN[::2], N_max=3, criterion="estimator")
    assert trace.criterion == "estimator"
    assert basis.N == len(trace.records) or trace.stagnated


def test_greedy_rejects_bad_input(delta_model):
    with pytest.raises(ReducedBasisError):
        greedy_train(delta_model, DELTA_TRAIN, N_max=0)
    with pytest.raises(ParameterRangeError):
        greedy_train(delta_model, [])


def test_greedy_stops_at_floor(delta_model, delta_greedy):
    _, _, full = delta_greedy
    assert len(full.records) >= 2 and full.floor is None and not full.floor_reached
    floor = full.max_errors[1]
    basis, _, trace = greedy_train(delta_model, DELTA_TRAIN, N_max=6, tol=1e-12, floor=floor)
    assert trace.floor_reached and not trace.converged
    assert trace.floor == floor
    assert basis.N <= 2 and trace.max_errors[-1] <= floor


# Galerkin error against the surrogate in its own energy norm does not grow with N
def test_surrogate_error_is_monotone_in_N(delta_model, delta_greedy):
    basis, _, _ = delta_greedy
    dec = delta_model.decomposition
    params = [0.07, 0.2, 0.45, 0.7, 0.95]
    previous = None
    for N in range(basis.N + 1):
        rm = project_model(delta_model, basis.truncate(N))
        errors = np.array([
            norm(dec.matrix(d), solve_detailed_affine(delta_model, d).coeffs - lift(rm.basis, solve_reduced(rm, d)))
            for d in params
        ])
        if previous is not None:
            assert np.all(errors <= previous * (1.0 + 1e-10) + 1e-14)
        previous = errors


# Reduced models survive a save and load
def test_reduced_model_file(tmp_path, delta_model, delta_greedy):
    _, rm, _ = delta_greedy
    path = rm.save(tmp_path / "rb_delta")
    assert path.suffix == ".npz"
    loaded = ReducedModel.load(path, delta_model.decomposition)
    assert loaded.N == rm.N and loaded.variant == "delta_param"
    np.testing.assert_array_equal(solve_reduced(loaded, 0.3).coeffs, solve_reduced(rm, 0.3).coeffs)
    assert set(loaded.norm_grams) == set(rm.norm_grams)


def test_reduced_model_file_checks_terms(tmp_path, delta_greedy, s_model_inf):
    _, rm, _ = delta_greedy
    path = rm.save(tmp_path / "rb_delta")
    with pytest.raises(ReducedBasisError):
        ReducedModel.load(path, s_model_inf.decomposition)
