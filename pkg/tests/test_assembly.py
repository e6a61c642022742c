import numpy as np
import pytest
import scipy.linalg

from app.errors import AssemblyError, KernelError, QuadratureError
from app.services.fem.assembly import assemble_mass
from app.services.fem.linalg import is_spd
from app.services.fem.mesh import build_mesh
from app.services.kernel import (
    KernelSpec,
    QuadratureConfig,
    assemble_fractional_gram,
    assemble_fractional_laplace,
    assemble_nonlocal,
    oracle_entry,
    splitting_constant,
)
from app.services.kernel.oracle import entry_scale


def _relative_gap(A, mesh, spec, entries):
    scale = 1e-6 * float(np.max(np.abs(A)))
    worst = 0.0
    for i, j in entries:
        reference = oracle_entry(mesh, spec, i, j)
        worst = max(worst, abs(A[i, j] - reference) / max(abs(reference), scale))
    return worst


# Stiffness matrices are symmetric positive definite
@pytest.mark.parametrize("s", [0.1, 0.5, 0.9])
@pytest.mark.parametrize("delta", [0.125, 0.5, 1.0])
def test_nonlocal_matrix_is_spd(mesh16, s, delta):
    A = assemble_nonlocal(mesh16, KernelSpec(s=s, delta=delta))
    assert A.shape == (15, 15)
    np.testing.assert_array_equal(A, A.T)
    assert is_spd(A)


# Assembled entries against nested adaptive quadrature
@pytest.mark.parametrize("s", [0.25, 0.5])
def test_fractional_entries_match_oracle(mesh8, s):
    spec = KernelSpec(s=s, delta=0.25)
    A = assemble_nonlocal(mesh8, spec)
    entries = [(0, 0), (3, 3), (3, 4), (3, 5), (2, 5), (0, 6)]
    assert _relative_gap(A, mesh8, spec, entries) <= 1e-5


# Boundary, diagonal and far entries on 32 elements, including s = 1/3 with delta = 1
@pytest.mark.parametrize("s", [1.0 / 3.0, 0.5])
@pytest.mark.parametrize("delta", [0.25, 1.0])
def test_entries_match_oracle_on_finer_mesh(s, delta):
    mesh = build_mesh(0.0, 1.0, 32)
    spec = KernelSpec(s=s, delta=delta)
    A = assemble_nonlocal(mesh, spec)
    assert _relative_gap(A, mesh, spec, [(0, 0), (0, 1), (15, 16), (4, 11)]) <= 1e-6


def test_custom_profile_matches_oracle(mesh8):
    spec = KernelSpec(family="custom_radial", s=0.5, delta=0.25, radial_profile=lambda r: np.exp(-r) + 0.0 * r)
    A = assemble_nonlocal(mesh8, spec)
    np.testing.assert_array_equal(A, A.T)
    assert _relative_gap(A, mesh8, spec, [(0, 0), (3, 3), (3, 4), (3, 6)]) <= 1e-5


# Enlarging the interaction radius only adds energy
def test_matrix_grows_with_delta(mesh16):
    small = assemble_nonlocal(mesh16, KernelSpec(s=0.5, delta=0.25))
    large = assemble_nonlocal(mesh16, KernelSpec(s=0.5, delta=0.5))
    lam = scipy.linalg.eigvalsh(large - small)
    assert lam.min() >= -1e-8 * np.max(np.abs(large))


# A(inf) does not depend on the splitting radius
def test_splitting_invariance(mesh16):
    for s in (1.0 / 3.0, 0.5):
        base = assemble_fractional_laplace(mesh16, s, 1.0)
        for delta_p in (1.5, 2.0):
            other = assemble_fractional_laplace(mesh16, s, delta_p)
            assert np.max(np.abs(other - base)) <= 1e-8 * np.max(np.abs(base))


def test_fractional_laplace_is_splitting_sum(mesh8):
    s = 0.4
    A = assemble_nonlocal(mesh8, KernelSpec(s=s, delta=1.5))
    expected = A + splitting_constant(1.5, 1, s) * assemble_mass(mesh8)
    np.testing.assert_allclose(assemble_fractional_laplace(mesh8, s, 1.5), expected, rtol=1e-13)
    gram = assemble_fractional_gram(mesh8, s, np.inf, delta_p=1.5)
    np.testing.assert_array_equal(gram, assemble_fractional_laplace(mesh8, s, 1.5))
    with pytest.raises(KernelError):
        assemble_fractional_laplace(mesh8, s, 0.5)


def test_assembly_input_errors(mesh8):
    with pytest.raises(AssemblyError):
        assemble_nonlocal(mesh8, KernelSpec(s=0.5, delta=np.inf))
    with pytest.raises(QuadratureError):
        QuadratureConfig(outer_order=1)


def test_oracle_accuracy_scales_with_diagonal(mesh8, mesh16):
    spec = KernelSpec(s=0.25, delta=0.5)
    ratio = entry_scale(mesh16, spec, 0.5) / entry_scale(mesh8, spec, 0.5)
    assert ratio == pytest.approx(0.5**0.5, rel=1e-12)
