import math

import numpy as np
import pytest

from galerkin_ofb.errors import BasisTooSmall
from galerkin_ofb.lifting import build_lifting, dirichlet_coefficient, lift_field
from galerkin_ofb.spectral import Rectangle, enumerate_modes
from galerkin_ofb.synthesis import assemble_BC

PI2 = math.pi**2


@pytest.fixture(scope="module")
def basis():
    return enumerate_modes(Rectangle(), 80)


def test_lifting_constants(basis):
    sys = build_lifting(basis, 2)
    lam2 = 5 * PI2
    ref = basis.lam[:2] - np.sqrt(2 * PI2 * basis.jx[:2] ** 2) * lam2**-0.75
    np.testing.assert_allclose(sys.k, ref, rtol=1e-14)
    assert sys.k[0] == pytest.approx(19.500586, abs=1e-6)


def test_dirichlet_coefficient_closed_form(basis):
    # -G_11 / (k_1 - lam_1) = sqrt(2 pi^2) * lam_2^(3/4)
    sys = build_lifting(basis, 2)
    c = dirichlet_coefficient(sys, 0, 0)
    assert c[0] == pytest.approx(math.sqrt(2 * PI2) * (5 * PI2) ** 0.75, rel=1e-12)
    assert c[0] == pytest.approx(82.72, abs=0.01)
    # modes with a different along-edge frequency do not couple
    assert np.all(c[basis.ky != basis.ky[0]] == 0)


def test_dirichlet_coefficient_index_check(basis):
    with pytest.raises(IndexError):
        dirichlet_coefficient(build_lifting(basis, 2), 2, 0)


def test_single_mode_B(basis):
    # N = 1: B_11 = G_11 / (k_1 - lam_1)^2 = lam_1^(3/2)
    B, _ = assemble_BC(build_lifting(basis, 1))
    assert B[0, 0] == pytest.approx((2 * PI2) ** 1.5, rel=1e-12)
    assert B[0, 0] == pytest.approx(87.70, abs=0.01)


@pytest.mark.parametrize("N", [1, 3, 6, 10])
def test_lift_matrix_head_equals_B(basis, N):
    sys = build_lifting(basis, N)
    B, C = assemble_BC(sys)
    np.testing.assert_allclose(sys.lift_matrix[:N], B, rtol=1e-12, atol=1e-12 * np.abs(B).max())
    np.testing.assert_allclose(sys.lift_matrix_k[:N], C, rtol=1e-12, atol=1e-12 * np.abs(C).max())


def test_lift_matrix_from_coefficients(basis):
    N = 4
    sys = build_lifting(basis, N)
    T = sys.trace_T
    ref = np.zeros((basis.count, N))
    for i in range(N):
        for j in range(N):
            ref[:, j] += T[i, j] * dirichlet_coefficient(sys, i, j)
    np.testing.assert_allclose(sys.lift_matrix, ref, rtol=1e-12, atol=1e-14)


def test_lift_field_shape(basis):
    sys = build_lifting(basis, 3)
    assert lift_field(sys, np.ones(3)).shape == (80,)
    with pytest.raises(ValueError):
        lift_field(sys, np.ones(2))


def test_basis_too_small(basis):
    with pytest.raises(BasisTooSmall):
        build_lifting(basis.subset(5), 5)
    with pytest.raises(ValueError):
        build_lifting(basis, 0)
