import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from galerkin_ofb.errors import NotFound
from galerkin_ofb.lifting import build_lifting
from galerkin_ofb.spectral import Rectangle, enumerate_modes
from galerkin_ofb.synthesis import (SWEEP_COLUMNS, assemble_BC, design_controller, find_min_N,
                                    gain, scaling_sweep, spectral_norm, zeta_matrix)

PI2 = math.pi**2


@pytest.fixture(scope="module")
def basis():
    return enumerate_modes(Rectangle(), 600)


def zeta_oracle(sys, P=2_000_000):
    """Direct sum over the left-edge coupled column jx = 1..P plus 1/(beta^2 P) tail."""
    b = sys.basis
    N = sys.N
    p = np.arange(1, P + 1, dtype=float)
    Z = np.zeros((N, N))
    for j in range(N):
        ky = b.ky[j]
        inside = [int(b.jx[n]) for n in range(N) if b.ky[n] == ky]
        for i in range(N):
            alpha = sys.k[i] + PI2 * ky**2
            g2 = (2 * PI2 * b.jx[j] * p) ** 2
            terms = g2 / (alpha + PI2 * p**2) ** 2
            s = math.fsum(terms) - math.fsum(terms[q - 1] for q in inside)
            s += (2 * PI2 * b.jx[j]) ** 2 / (PI2**2 * (P + 0.5))
            Z[i, j] = s
    return Z


@pytest.mark.parametrize("N", [1, 3, 6])
def test_zeta_against_direct_sum(basis, N):
    sys = build_lifting(basis, N)
    z = zeta_matrix(sys)
    np.testing.assert_allclose(z.zeta, zeta_oracle(sys), rtol=1e-8)
    assert np.all(z.window <= z.zeta)


def test_zeta_independent_of_window(basis):
    sys = build_lifting(basis, 4)
    a = zeta_matrix(sys, tail_count=60).zeta
    b = zeta_matrix(sys, tail_count=500).zeta
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_spectral_norm_matches_svd():
    rng = np.random.default_rng(3)
    for shape in [(1, 1), (4, 7), (30, 30)]:
        G = rng.standard_normal(shape)
        assert spectral_norm(G) == pytest.approx(np.linalg.norm(G, 2), rel=1e-8)
    assert spectral_norm(np.zeros((3, 3))) == 0.0


def test_B_C_symmetric(basis):
    B, C = assemble_BC(build_lifting(basis, 8))
    assert np.array_equal(B, B.T) and np.array_equal(C, C.T)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.floats(0.51, 5000.0))
def test_gain_identity(N, m):
    b = enumerate_modes(Rectangle(), 41)
    sys = build_lifting(b, N)
    B, C = assemble_BC(sys)
    A = np.diag(-b.lam[:N])
    r = gain(A, B, C, m)
    target = m * np.eye(N) + A
    assert np.linalg.norm((m * B - C) @ r.K + target, 2) <= 1e-10 * np.linalg.norm(target, 2)
    # controlled modes placed at rate m: A_s - C K = -m (I + B K)
    lhs = A - C @ r.K
    np.testing.assert_allclose(lhs, -m * (np.eye(N) + B @ r.K), atol=1e-9 * np.abs(lhs).max())


def test_gain_rejects_small_m(basis):
    sys = build_lifting(basis, 2)
    B, C = assemble_BC(sys)
    with pytest.raises(ValueError):
        gain(np.diag(-basis.lam[:2]), B, C, 0.5)


def test_closed_loop_identity(basis):
    # A_s - C K = -m (I + B K) for every N
    d = design_controller(Rectangle(), 6, 120.0, basis=basis)
    lhs = d.A_s - d.C @ d.K
    np.testing.assert_allclose(lhs, -d.m * (np.eye(6) + d.B @ d.K), atol=1e-9 * abs(lhs).max())


def test_reference_design(basis):
    d = design_controller(Rectangle(), 6, 120.0, basis=basis)
    assert not d.certified
    assert d.margin == pytest.approx(-7.4225, abs=1e-3)
    assert d.diagnostics["lambda_next"] == pytest.approx(13 * PI2)
    assert d.diagnostics["gain_residual"] <= 1e-10


@pytest.mark.parametrize("N", [3, 6, 9])
def test_I_plus_BK_rank_equals_distinct_edge_frequencies(basis, N):
    d = design_controller(Rectangle(), N, 120.0, basis=basis)
    distinct = len(set(basis.ky[:N].tolist()))
    assert d.diagnostics["trace_rank"] == distinct
    assert np.linalg.matrix_rank(np.eye(N) + d.B @ d.K, tol=1e-10) == distinct


def test_small_N_invertible(basis):
    for N in (1, 2):
        d = design_controller(Rectangle(), N, 10.0, basis=basis)
        assert math.isfinite(d.diagnostics["norm_IBK_inv"])
        assert d.diagnostics["cond_IBK"] < 1e6


def test_find_min_N():
    N, d, table = find_min_N(lambda N: 0.6, 10)
    assert N == 1 and d.certified and d.margin == pytest.approx(48.56, abs=0.01)
    assert len(table) == 1


def test_find_min_N_not_found():
    with pytest.raises(NotFound) as exc:
        find_min_N(lambda N: 400.0, 3)
    assert len(exc.value.table) == 3


def test_scaling_sweep_rows():
    rows = scaling_sweep([5, 6, 7], 120.0)
    assert [r["N"] for r in rows] == [5, 6, 7]
    assert set(rows[0]) == set(SWEEP_COLUMNS)
    assert all(r["error"] == "" for r in rows)
    with pytest.raises(ValueError):
        scaling_sweep([7, 5], 120.0)
