import math

import numpy as np
import pytest
from scipy.special import gamma

from app.errors import ParameterRangeError, SolverError
from app.services.affine import chebyshev_nodes
from app.services.fem.mesh import build_mesh
from app.services.solver import (
    build_s_model,
    error_norm,
    save_solutions_csv,
    solutions_frame,
    solve_exact_delta,
    solve_exact_s,
    solve_linear,
    solve_regularized_s,
)


def _torsion_center(s: float, radius: float) -> float:
    """Value at the center of the solution of (-Laplace)^s u = 1 on a ball of the given radius."""
    return math.sqrt(math.pi) * radius ** (2.0 * s) / (2.0 ** (2.0 * s) * gamma(1.0 + s) * gamma(0.5 + s))


# Direct solves record a tiny relative residual
def test_solve_linear_residual():
    A = np.array([[4.0, 1.0], [1.0, 3.0]])
    u = solve_linear(A, np.array([1.0, 2.0]), 0.3, "exact_delta")
    np.testing.assert_allclose(A @ u.coeffs, [1.0, 2.0])
    assert u.solver_residual < 1e-12
    assert u.param == 0.3 and u.variant == "exact_delta"
    with pytest.raises(SolverError):
        solve_linear(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones(2), 0.0, "exact_delta")


def test_solvers_check_the_model_variant(delta_model, s_model):
    with pytest.raises(SolverError):
        solve_exact_s(delta_model, 0.4)
    with pytest.raises(SolverError):
        solve_exact_delta(s_model, 0.25)
    with pytest.raises(ParameterRangeError):
        solve_exact_s(s_model, 1.0)


def test_fractional_gram_is_cached(delta_model):
    assert delta_model.fractional_gram(0.5, 0.3125) is delta_model.fractional_gram(0.5, 0.3125)
    # radii are snapped before the lookup
    assert delta_model.fractional_gram(0.5, 0.32) is delta_model.fractional_gram(0.5, 0.3125)


def test_error_norms(delta_model):
    u = solve_exact_delta(delta_model, 0.5)
    zero = u.model_copy(update={"coeffs": np.zeros_like(u.coeffs)})
    pivot = error_norm(delta_model, u, zero)
    assert pivot == pytest.approx(np.sqrt(u.coeffs @ delta_model.pivot_gram @ u.coeffs))
    # delta* = 0.5, so the pivot norm is the energy norm at the solution's radius
    assert error_norm(delta_model, u, zero, "V_s") == pytest.approx(pivot)
    assert error_norm(delta_model, u, zero, "L2") > 0.0
    assert error_norm(delta_model, u, zero, "H1") > 0.0
    with pytest.raises(ValueError):
        error_norm(delta_model, u, zero, "Linf")


# Fractional Laplacian with constant load against the closed-form center value
def test_fractional_laplacian_center_value():
    errors = []
    for n_el in (16, 32):
        mesh = build_mesh(0.0, 1.0, n_el)
        model = build_s_model(mesh, np.inf, chebyshev_nodes(1.0 / 3.0, 0.5, 0), F=lambda x: np.ones_like(x))
        u = solve_exact_s(model, 0.5)
        center = u.coeffs[n_el // 2 - 1]
        errors.append(abs(center - _torsion_center(0.5, 0.5)))
    assert errors[1] < errors[0]
    assert errors[1] < 0.1 * _torsion_center(0.5, 0.5)


def test_regularized_solution_close_to_truth(mesh16):
    model = build_s_model(mesh16, 0.25, chebyshev_nodes(1.0 / 3.0, 0.5, 8))
    exact = solve_exact_s(model, 0.4)
    regularized = solve_regularized_s(model, 0.4)
    err = error_norm(model, exact, regularized, "V_s")
    size = error_norm(model, exact, exact.model_copy(update={"coeffs": 0.0 * exact.coeffs}), "V_s")
    assert err < 0.1 * size


# Solution tables
def test_solutions_csv(tmp_path, mesh16, delta_model):
    solutions = [solve_exact_delta(delta_model, d) for d in (0.25, 1.0)]
    frame = solutions_frame(mesh16, solutions)
    assert list(frame.columns) == ["x", "value", "parameter"]
    assert len(frame) == 2 * 17
    assert frame["value"].iloc[0] == 0.0 and frame["value"].iloc[16] == 0.0
    path = save_solutions_csv(tmp_path / "u.csv", mesh16, solutions, "solution snapshots")
    lines = path.read_text().splitlines()
    assert lines[0] == "# mirrors: solution snapshots"
    assert lines[1] == "x,value,parameter"
    assert len(lines) == 2 + 2 * 17
    assert solutions_frame(mesh16, []).empty
