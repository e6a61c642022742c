import numpy as np
import pytest

from app.errors import MeshError, QuadratureError, SolverError
from app.services.fem import (
    assemble_h1_gram,
    assemble_load,
    assemble_mass,
    build_mesh,
    cholesky,
    interpolate,
    norm,
    prolong,
)
from app.services.fem.linalg import freeze, is_spd, save_matrix_binary, save_matrix_text


# Mesh geometry and DoF layout
def test_mesh_geometry(mesh8):
    assert mesh8.h == pytest.approx(0.125)
    assert mesh8.diam == 1.0
    assert mesh8.nodes[0] == 0.0 and mesh8.nodes[-1] == pytest.approx(1.0)
    assert mesh8.dofs.size == 7


def test_mesh_rejects_bad_input():
    with pytest.raises(MeshError):
        build_mesh(1.0, 0.0, 8)
    with pytest.raises(MeshError):
        build_mesh(0.0, 1.0, 1)
    with pytest.raises(MeshError):
        build_mesh(0.0, 1.0, 0)


def test_prolong_adds_boundary_zeros(mesh8):
    u = interpolate(mesh8, lambda x: x * (1.0 - x))
    full = prolong(mesh8, u)
    assert full.shape == (9,)
    assert full[0] == 0.0 and full[-1] == 0.0
    np.testing.assert_allclose(full[1:-1], u)
    with pytest.raises(MeshError):
        prolong(mesh8, np.zeros(3))


# Mass and stiffness against closed forms for the sum of interior hats
def test_mass_and_h1_of_interior_hats(mesh16):
    h = mesh16.h
    one = np.ones(mesh16.dofs.size)
    M = assemble_mass(mesh16)
    K = assemble_h1_gram(mesh16)
    assert one @ M @ one == pytest.approx(1.0 - 4.0 * h / 3.0)
    assert one @ K @ one == pytest.approx(2.0 / h)
    assert not M.flags.writeable
    np.testing.assert_array_equal(M, M.T)


def test_load_constant_and_indicator(mesh8):
    h = mesh8.h
    np.testing.assert_allclose(assemble_load(mesh8, lambda x: np.ones_like(x)), h)
    step = lambda x: np.where(x >= 0.5, 1.0, 0.0)
    F = assemble_load(mesh8, step, jumps=(0.5,))
    nodes = mesh8.nodes[1:-1]
    expected = np.where(nodes > 0.5, h, np.where(np.isclose(nodes, 0.5), h / 2.0, 0.0))
    np.testing.assert_allclose(F, expected, atol=1e-14)


def test_load_accepts_scalar_function(mesh8):
    F = assemble_load(mesh8, lambda x: 2.0)
    np.testing.assert_allclose(F, 2.0 * mesh8.h)


def test_load_rejects_low_order_and_nan(mesh8):
    with pytest.raises(QuadratureError):
        assemble_load(mesh8, lambda x: x, order=2)
    with pytest.raises(QuadratureError):
        assemble_load(mesh8, lambda x: np.full_like(x, np.nan))


# Linear algebra helpers
def test_norm_and_cholesky():
    G = freeze(np.array([[2.0, 0.0], [0.0, 8.0]]))
    assert norm(G, np.array([1.0, 0.5])) == pytest.approx(np.sqrt(4.0))
    assert is_spd(G)
    with pytest.raises(SolverError):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(ValueError):
        norm(G, np.ones(3))


def test_matrix_export_formats(tmp_path, mesh8):
    M = np.asarray(assemble_mass(mesh8))
    binary = save_matrix_binary(tmp_path / "mass", M)
    assert binary.suffix == ".npy"
    np.testing.assert_array_equal(np.load(binary), M)

    text = save_matrix_text(tmp_path / "mass.txt", M)
    table = np.loadtxt(text)
    assert table.shape == (np.count_nonzero(M), 3)
    rebuilt = np.zeros_like(M)
    rebuilt[table[:, 0].astype(int), table[:, 1].astype(int)] = table[:, 2]
    np.testing.assert_array_equal(rebuilt, M)
    assert text.read_text().startswith("# nlrb matrix 7x7")
