"""Dirichlet lifting of the boundary control in the eigenbasis.

The lifting operators D_i are never solved on a grid. Green's formula gives
their modal coefficients exactly::

    <D_i g, phi_n> = -<g, d_n phi_n>_{Gamma_1} / den(i, n)
    den(i, n) = k_i - lambda_n   (n <= N)
              = k_i + lambda_n   (n >  N)

with lifting constants ``k_i = lambda_i - ||d_n phi_i|| * lambda_N**(-3/4)``.
Boundary profiles are restricted to the span of the traces d_n phi_j.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import BasisTooSmall, SingularLifting


@dataclass(frozen=True, eq=False)
class LiftingSystem:
    basis: object
    N: int
    k: np.ndarray
    denominators: np.ndarray = field(repr=False)
    min_gap: float = 0.0
    min_abs_denominator: float = 0.0

    @property
    def count(self):
        return self.basis.count

    @property
    def trace_T(self):
        """Coefficients c[i, j] with T_i = sum_j c[i, j] * d_n phi_j."""
        return -1.0 / (self.k[:, None] - self.basis.lam[None, :self.N])

    @cached_property
    def gram(self):
        """Trace inner products <d_n phi_j, d_n phi_n>, shape (N, count)."""
        return self.basis.trace_gram(np.arange(self.N), None)

    @cached_property
    def lift_matrix(self):
        """Map from control vector u to the modal coefficients of sum_i D_i U_i.

        Entry [n, j] = sum_i <dphi_j, dphi_n> / ((k_i - lambda_j) den(i, n)).
        """
        return self._lift(np.ones(self.N))

    @cached_property
    def lift_matrix_k(self):
        """As :attr:`lift_matrix` with each D_i weighted by k_i."""
        return self._lift(self.k)

    def _lift(self, weight):
        inv_gap = 1.0 / (self.k[:, None] - self.basis.lam[None, :self.N])  # (i, j)
        q = (inv_gap * weight[:, None]).T @ (1.0 / self.denominators)      # (j, n)
        return (self.gram * q).T


def build_lifting(basis, N, eps_rel=1e-9):
    """Lifting constants and denominators for a controller of dimension N."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if N >= basis.count:
        raise BasisTooSmall(f"N={N} needs a basis with more than {N} modes (have {basis.count})")
    lam = basis.lam
    trace_norm = np.sqrt(basis.trace_norm_sq[:N])
    k = lam[:N] - trace_norm * lam[N - 1] ** -0.75
    den = k[:, None] + lam[None, :]
    den[:, :N] = k[:, None] - lam[None, :N]
    floor = eps_rel * lam[N - 1]
    min_abs = float(np.abs(den).min())
    if min_abs < floor:
        i, n = np.unravel_index(np.argmin(np.abs(den)), den.shape)
        raise SingularLifting(
            f"|den({i}, {n})| = {min_abs:.3e} below floor {floor:.3e}")
    gap = float(np.abs(k[:, None] - lam[None, :N]).min())
    return LiftingSystem(basis, N, k, den, gap, min_abs)


def dirichlet_coefficient(sys, i, j):
    """Modal coefficients <D_i(d_n phi_j), phi_n> for all n (0-based i, j)."""
    if not 0 <= i < sys.N:
        raise IndexError(f"lifting index {i} outside 0..{sys.N - 1}")
    g = sys.basis.trace_gram([j], None)[0]
    return -g / sys.denominators[i]


def lift_field(sys, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (sys.N,):
        raise ValueError(f"control vector must have length {sys.N}, got {u.shape}")
    return sys.lift_matrix @ u
