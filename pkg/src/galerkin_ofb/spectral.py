"""Dirichlet-Laplacian eigenpairs on axis-aligned rectangles.

Everything involving pure eigenmodes is closed form: eigenvalues, normal
derivative traces on an edge and their inner products. Quadrature only
enters through :class:`ModalGrid`, which is used for nonlinear terms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import fft as sfft
from scipy.special import gamma

from .errors import BasisTooSmall, DegenerateDomain

EDGES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Rectangle:
    """The domain (0, width) x (0, height) with one controlled edge."""

    width: float = 1.0
    height: float = 1.0
    controlled_edge: str = "left"

    def __post_init__(self):
        if not (np.isfinite(self.width) and np.isfinite(self.height)):
            raise DegenerateDomain("rectangle sides must be finite")
        if self.width <= 0 or self.height <= 0:
            raise DegenerateDomain(
                f"rectangle sides must be positive, got {self.width} x {self.height}")
        if self.controlled_edge not in EDGES:
            raise DegenerateDomain(f"controlled_edge must be one of {EDGES}")

    @property
    def area(self):
        return self.width * self.height

    def edge_length(self, edge=None):
        edge = edge or self.controlled_edge
        return self.height if edge in ("left", "right") else self.width


def eigenvalue(domain, jx, ky):
    return np.pi**2 * ((jx / domain.width) ** 2 + (ky / domain.height) ** 2)


def trace_data(domain, jx, ky, edge=None):
    """Normal-derivative trace of the (jx, ky) eigenfunction on an edge.

    On every edge the outward normal derivative is ``amp * sin(idx*pi*s/len)``
    with ``s`` the arclength coordinate along the edge. Returns ``(amp, idx)``.
    """
    edge = edge or domain.controlled_edge
    jx = np.asarray(jx)
    ky = np.asarray(ky)
    norm = 2.0 / math.sqrt(domain.area)
    if edge == "left":
        return -norm * np.pi * jx / domain.width, ky
    if edge == "right":
        return norm * np.pi * jx / domain.width * (-1.0) ** jx, ky
    if edge == "bottom":
        return -norm * np.pi * ky / domain.height, jx
    if edge == "top":
        return norm * np.pi * ky / domain.height * (-1.0) ** ky, jx
    raise DegenerateDomain(f"unknown edge {edge!r}")


@dataclass(frozen=True)
class EigenMode:
    rank: int
    jx: int
    ky: int
    lam: float
    trace_norm_sq: float


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """First ``count`` eigenpairs, sorted by eigenvalue then (jx, ky)."""

    domain: Rectangle
    jx: np.ndarray
    ky: np.ndarray
    lam: np.ndarray
    trace_amp: np.ndarray = field(repr=False)
    trace_idx: np.ndarray = field(repr=False)

    @property
    def count(self):
        return len(self.lam)

    @property
    def trace_norm_sq(self):
        return self.trace_amp**2 * self.domain.edge_length() / 2.0

    @cached_property
    def modes(self):
        tn = self.trace_norm_sq
        return tuple(
            EigenMode(n + 1, int(self.jx[n]), int(self.ky[n]), float(self.lam[n]), float(tn[n]))
            for n in range(self.count))

    def trace_gram(self, rows=None, cols=None):
        """Matrix of <d_n phi_a, d_n phi_b> on the controlled edge.

        ``rows`` and ``cols`` are index arrays or slices (0-based).
        """
        rows = slice(None) if rows is None else rows
        cols = slice(None) if cols is None else cols
        a_amp, a_idx = self.trace_amp[rows], self.trace_idx[rows]
        b_amp, b_idx = self.trace_amp[cols], self.trace_idx[cols]
        same = a_idx[:, None] == b_idx[None, :]
        return np.where(same, np.outer(a_amp, b_amp) * (self.domain.edge_length() / 2.0), 0.0)

    def boundary_trace_norm_sq(self, edges=EDGES):
        total = np.zeros(self.count)
        for edge in edges:
            amp, _ = trace_data(self.domain, self.jx, self.ky, edge)
            total += amp**2 * self.domain.edge_length(edge) / 2.0
        return total

    def subset(self, count):
        if count > self.count:
            raise BasisTooSmall(f"requested {count} modes from a basis of {self.count}")
        return SpectralBasis(self.domain, self.jx[:count], self.ky[:count], self.lam[:count],
                             self.trace_amp[:count], self.trace_idx[:count])


def _sort_key(domain, jx, ky):
    # Rounded eigenvalue so that mathematically equal eigenvalues tie exactly
    # and fall through to the (jx, ky) rule.
    scale = np.pi**2 / min(domain.width, domain.height) ** 2
    return np.round(eigenvalue(domain, jx, ky) / scale, 10)


def enumerate_modes(domain, count, check_simple=True):
    """Return the first ``count`` Dirichlet eigenpairs of ``domain``.

    The search box is grown until every mode outside it is provably larger
    than the last returned eigenvalue.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    W, H = domain.width, domain.height
    # Initial box from the Weyl estimate of the count-th eigenvalue.
    lam_cap = 4.0 * np.pi * (count + 1) / domain.area + eigenvalue(domain, 1, 1)
    while True:
        jmax = int(math.ceil(math.sqrt(lam_cap) * W / np.pi)) + 1
        kmax = int(math.ceil(math.sqrt(lam_cap) * H / np.pi)) + 1
        J, K = np.meshgrid(np.arange(1, jmax + 1), np.arange(1, kmax + 1), indexing="ij")
        J, K = J.ravel(), K.ravel()
        key = _sort_key(domain, J, K)
        order = np.lexsort((K, J, key))
        if len(order) >= count + 1:
            last = key[order[count - 1]]
            # smallest eigenvalue key just outside the box
            outside = min(_sort_key(domain, jmax + 1, 1), _sort_key(domain, 1, kmax + 1))
            if outside > last:
                break
        lam_cap *= 2.0
    sel = order[:count]
    jx, ky = J[sel], K[sel]
    lam = eigenvalue(domain, jx, ky)
    amp, idx = trace_data(domain, jx, ky)
    basis = SpectralBasis(domain, jx, ky, lam, amp, idx)
    if check_simple and count >= 2 and not lam[0] < lam[1]:
        raise DegenerateDomain("ground eigenvalue is not simple")
    return basis


def trace_inner_product(a, b, domain):
    """<d_n phi_a, d_n phi_b> in L2 of the controlled edge (closed form)."""
    amp_a, idx_a = trace_data(domain, a.jx, a.ky)
    amp_b, idx_b = trace_data(domain, b.jx, b.ky)
    if idx_a != idx_b:
        return 0.0
    return float(amp_a * amp_b * domain.edge_length() / 2.0)


def weyl_constant(d):
    """C_d = (4 pi)^(-d/2) / Gamma(d/2 + 1)."""
    if d < 1 or int(d) != d:
        raise ValueError("dimension must be a positive integer")
    return (4.0 * np.pi) ** (-d / 2.0) / gamma(d / 2.0 + 1.0)


def bly_lower_bound(k, d, volume):
    """Berezin-Li-Yau lower bound for the k-th Dirichlet eigenvalue."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if volume <= 0:
        raise ValueError("volume must be positive")
    return d / (d + 2.0) * (k / (weyl_constant(d) * volume)) ** (2.0 / d)


def weyl_ratio(basis, k):
    """lambda_k divided by its Weyl asymptote; tends to 1 as k grows."""
    if not 1 <= k <= basis.count:
        raise IndexError(f"k={k} outside 1..{basis.count}")
    asym = (k / (weyl_constant(2) * basis.domain.area)) ** (2.0 / 2)
    return float(basis.lam[k - 1] / asym)


def rellich_fit(basis, edges=EDGES):
    """Fitted (c, C) with c*lam <= ||d_n phi||^2 <= C*lam on the given edges."""
    ratio = basis.boundary_trace_norm_sq(edges) / basis.lam
    return float(ratio.min()), float(ratio.max())


def _sine_matrix(n_max, points, length):
    n = np.arange(1, n_max + 1)
    return np.sin(np.pi * np.outer(n, np.asarray(points, dtype=float)) / length)


def _coefficient_array(coeffs, basis, shape):
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.ndim != 1 or len(coeffs) > basis.count:
        raise ValueError(f"expected at most {basis.count} modal coefficients, got {coeffs.shape}")
    n = len(coeffs)
    cmat = np.zeros(shape)
    np.add.at(cmat, (basis.jx[:n] - 1, basis.ky[:n] - 1), coeffs)
    return cmat


def reconstruct_field(coeffs, basis, grid):
    """Evaluate sum_n c_n phi_n on the tensor grid ``(x, y)``.

    Returns an array of shape ``(len(x), len(y))``.
    """
    x, y = (np.atleast_1d(np.asarray(g, dtype=float)) for g in grid)
    dom = basis.domain
    tol = 1e-12 * max(dom.width, dom.height)
    if x.min() < -tol or x.max() > dom.width + tol or y.min() < -tol or y.max() > dom.height + tol:
        raise ValueError("grid points must lie in the closed rectangle")
    n = len(np.asarray(coeffs))
    if n == 0:
        return np.zeros((len(x), len(y)))
    jm, km = int(basis.jx[:n].max()), int(basis.ky[:n].max())
    cmat = _coefficient_array(coeffs, basis, (jm, km))
    sx = _sine_matrix(jm, x, dom.width)
    sy = _sine_matrix(km, y, dom.height)
    return 2.0 / math.sqrt(dom.area) * (sx.T @ cmat @ sy)


def project_function(func, basis, nodes=256):
    """L2 projection of ``func(x, y)`` onto the basis by Gauss-Legendre quadrature."""
    dom = basis.domain
    t, w = np.polynomial.legendre.leggauss(nodes)
    x = (t + 1.0) * dom.width / 2.0
    y = (t + 1.0) * dom.height / 2.0
    wx = w * dom.width / 2.0
    wy = w * dom.height / 2.0
    X, Y = np.meshgrid(x, y, indexing="ij")
    F = np.broadcast_to(np.asarray(func(X, Y), dtype=float), X.shape)
    jm, km = int(basis.jx.max()), int(basis.ky.max())
    sx = _sine_matrix(jm, x, dom.width) * wx
    sy = _sine_matrix(km, y, dom.height) * wy
    cmat = sx @ F @ sy.T
    return 2.0 / math.sqrt(dom.area) * cmat[basis.jx - 1, basis.ky - 1]


class ModalGrid:
    """Uniform interior grid on which modal fields are synthesised and
    projected with type-I discrete sine transforms.

    With ``nx >= max jx`` and ``ny >= max ky`` the round trip
    coefficients -> grid -> coefficients is exact.
    """

    def __init__(self, basis, nx=None, ny=None, oversample=4):
        self.basis = basis
        self.jmax = int(basis.jx.max())
        self.kmax = int(basis.ky.max())
        self.nx = nx if nx is not None else max(oversample * self.jmax, 16)
        self.ny = ny if ny is not None else max(oversample * self.kmax, 16)
        if self.nx < self.jmax or self.ny < self.kmax:
            raise ValueError("grid cannot represent the basis")
        dom = basis.domain
        self.x = dom.width * np.arange(1, self.nx + 1) / (self.nx + 1)
        self.y = dom.height * np.arange(1, self.ny + 1) / (self.ny + 1)
        norm = 2.0 / math.sqrt(dom.area)
        self._synth = norm / 4.0
        self._proj = norm * (dom.width / (self.nx + 1)) * (dom.height / (self.ny + 1)) / 4.0

    @property
    def under_resolved(self):
        return self.nx < 4 * self.jmax or self.ny < 4 * self.kmax

    def to_grid(self, coeffs):
        cmat = _coefficient_array(coeffs, self.basis, (self.nx, self.ny))
        return self._synth * sfft.dstn(cmat, type=1)

    def from_grid(self, values, count=None):
        n = self.basis.count if count is None else count
        cmat = self._proj * sfft.dstn(values, type=1)
        return cmat[self.basis.jx[:n] - 1, self.basis.ky[:n] - 1]
