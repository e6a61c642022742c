import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.errors import ParameterRangeError, RegularizationError
from app.services.affine import (
    admissible_eps,
    chebyshev_nodes,
    compute_Cdelta,
    compute_shat,
    compute_sigma,
    default_rho,
    derivative_bound_constant,
    discrete_eta,
    lagrange_coefficients,
    log_sup_bound,
    make_regularization,
    regularized_matrix_eval,
    rhs_scale,
    rho_corollary,
)
from app.services.affine.s import interval_case
from app.services.kernel import scaling_constant, splitting_constant
from app.services.solver.detailed import build_s_model, error_norm, solve_exact_s, solve_regularized_s

S_MIN, S_MAX = 1.0 / 3.0, 0.5
grid8 = chebyshev_nodes(S_MIN, S_MAX, 8)


# Chebyshev anchors
def test_chebyshev_nodes():
    assert grid8.nodes[0] == S_MIN and grid8.nodes[-1] == S_MAX
    assert np.all(np.diff(grid8.nodes) > 0.0)
    midpoint = chebyshev_nodes(S_MIN, S_MAX, 0)
    assert midpoint.nodes == (pytest.approx(5.0 / 12.0),)
    with pytest.raises(ParameterRangeError):
        chebyshev_nodes(0.5, 0.4, 2)
    with pytest.raises(ParameterRangeError):
        chebyshev_nodes(S_MIN, S_MAX, -1)


# Lagrange coefficients
@given(st.floats(S_MIN, S_MAX))
def test_lagrange_partition_of_unity(s):
    assert lagrange_coefficients(s, grid8).sum() == pytest.approx(1.0, abs=1e-12)


@given(st.floats(S_MIN, S_MAX), st.integers(0, 8))
def test_lagrange_reproduces_polynomials(s, p):
    values = np.asarray(grid8.nodes) ** p
    assert lagrange_coefficients(s, grid8) @ values == pytest.approx(s**p, abs=1e-10)


def test_lagrange_is_unit_at_nodes():
    for m, sm in enumerate(grid8.nodes):
        expected = np.zeros(9)
        expected[m] = 1.0
        np.testing.assert_array_equal(lagrange_coefficients(sm, grid8), expected)
    with pytest.raises(ParameterRangeError):
        lagrange_coefficients(0.6, grid8)


# Regularization constants for [1/3, 1/2]
def test_regularization_constants():
    assert interval_case(S_MIN, S_MAX) == 1
    assert interval_case(0.6, 0.7) == 2
    assert interval_case(0.1, 0.9) is None
    s_hat, s1, s2 = compute_shat(S_MIN, S_MAX)
    assert s1 == S_MIN
    assert s2 == pytest.approx(5.0 / 6.0)
    assert s_hat == pytest.approx(7.0 / 12.0)
    assert compute_sigma(grid8, s1, s2) == pytest.approx(0.5)
    assert compute_Cdelta(0.25, 0.5) == pytest.approx(4.0 / math.e)
    assert compute_Cdelta(2.0, 0.5) == pytest.approx(4.0 * (math.exp(-1.0) + 2.0**1.5))
    assert default_rho(4.0 / math.e, 0.5, 8) == pytest.approx(2.0 * (4.0 / math.e) * 0.5**9)
    assert rho_corollary(1.0) == 2.0


def test_regularization_rules():
    numerics = make_regularization(grid8, 0.25)
    assert numerics.rho == pytest.approx(2.0 * numerics.interpolation_term)
    corollary = make_regularization(grid8, 0.25, rho_rule="corollary")
    assert corollary.rho == pytest.approx(2.0 * 4.0 / math.e)
    fixed = make_regularization(grid8, 0.25, rho_rule="fixed", rho=0.1)
    assert fixed.rho == 0.1
    with pytest.raises(RegularizationError):
        make_regularization(grid8, 0.25, rho_rule="fixed")
    with pytest.raises(RegularizationError):
        make_regularization(grid8, 0.25, rho_rule="fixed", rho=1e-12)


def test_wide_interval_is_rejected():
    with pytest.raises(RegularizationError):
        admissible_eps(0.1, 0.9)
    with pytest.raises(RegularizationError):
        compute_shat(S_MIN, S_MAX, eps=0.5)


# Bounds
def test_log_sup_bound_dominates_samples():
    xi = np.logspace(-300, 0, 10**5)
    for alpha in (0.1, 0.5, 1.0):
        for k in (1, 2, 5):
            sampled = np.max(xi**alpha * np.abs(np.log(xi)) ** k)
            assert sampled <= log_sup_bound(alpha, k, 1.0) * (1.0 + 1e-12)
    assert derivative_bound_constant(2, 0.5, 1.0) == pytest.approx(4.0 * log_sup_bound(0.5, 2, 1.0))
    with pytest.raises(ParameterRangeError):
        derivative_bound_constant(2, 0.0, 1.0)


def test_rhs_scale():
    F = np.array([1.0, -2.0])
    np.testing.assert_allclose(rhs_scale(F, 0.5), 2.0 * math.pi * F)


# Decomposition layout and nodal exactness
def test_s_decomposition_layout(s_model, s_model_inf):
    dec = s_model.decomposition
    assert dec.n_terms == 4 + 1 + 1
    assert dec.mass is None
    for m, sm in enumerate(dec.grid.nodes):
        assert regularized_matrix_eval(dec, sm, rho=0.0) is dec.anchors[m]

    dec_inf = s_model_inf.decomposition
    assert dec_inf.n_terms == 4 + 1 + 2
    theta = dec_inf.theta(dec_inf.grid.nodes[2])
    assert theta[5] == pytest.approx(splitting_constant(dec_inf.delta_p, 1, dec_inf.grid.nodes[2]))
    assert theta[-1] == dec_inf.reg.rho
    assert dec_inf.load_theta(0.5) == pytest.approx(2.0 / scaling_constant(1, 0.5))


def test_surrogate_error_decays_with_M(mesh16):
    errors = []
    for M in (2, 8):
        model = build_s_model(mesh16, 0.25, chebyshev_nodes(S_MIN, S_MAX, M))
        worst = 0.0
        for s in (0.35, 0.41, 0.47):
            worst = max(worst, error_norm(model, solve_exact_s(model, s), solve_regularized_s(model, s), "V_s"))
        errors.append(worst)
    assert errors[1] < errors[0]


def test_embedding_constant_at_most_one(s_model):
    low = s_model.pivot_gram
    eta = discrete_eta(low, s_model.fractional_gram(0.5, s_model.kernel.delta))
    assert 0.0 < eta <= 1.0 + 1e-10


# Identical and proportional pencils
def test_embedding_constant_degenerate_pencils(s_model):
    low = s_model.pivot_gram
    assert discrete_eta(low, low.copy()) == 1.0
    assert discrete_eta(low, 4.0 * low) == pytest.approx(0.5, rel=1e-8)
