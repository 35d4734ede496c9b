"""Gain synthesis and the spillover stability test for the modal controller.

For a lifting system of dimension N the controlled modes obey::

    p_s' = A_s p_s + f_s - B u' - C u,        u = K p_s,
    K = -(m B - C)^{-1} (m I + A_s),

which places them at rate ``m``. The design is certified when::

    m < lambda_{N+1} - ||K||^2/2 * sum_ij zeta_ij (m + k_i)^2 / (k_i - lambda_j)^2

where ``zeta_ij = sum_{n > N} <D_i(d_n phi_j), phi_n>^2`` measures spillover
into the uncontrolled modes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import IllConditioned, NotFound, SingularLifting, TailNotConverged
from .lifting import build_lifting
from .spectral import Rectangle, enumerate_modes

log = logging.getLogger(__name__)

COND_LIMIT = 1e12


def spectral_norm(G, tol=1e-10, max_iter=10_000):
    """Largest singular value by power iteration on G^T G.

    The seed is the normalised all-ones vector so results are reproducible.
    """
    G = np.asarray(G, dtype=float)
    if G.size == 0:
        return 0.0
    if not np.all(np.isfinite(G)):
        return math.inf
    v = np.ones(G.shape[1]) / math.sqrt(G.shape[1])
    est = 0.0
    for _ in range(max_iter):
        w = G.T @ (G @ v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            # seed orthogonal to the range; fall back to the SVD
            return float(np.linalg.norm(G, 2))
        v = w / new
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return math.sqrt(est)


def assemble_BC(sys):
    """Matrices B and C of the controlled-mode dynamics (both symmetric)."""
    N = sys.N
    lam = sys.basis.lam[:N]
    inv_gap = 1.0 / (sys.k[:, None] - lam[None, :])   # (i, j)
    G = sys.gram[:, :N]
    qb = inv_gap.T @ inv_gap
    qc = inv_gap.T @ (sys.k[:, None] * inv_gap)
    B = G * qb
    C = G * qc
    # BLAS does not guarantee bitwise symmetry of A^T A
    return (B + B.T) / 2.0, (C + C.T) / 2.0


@dataclass
class GainResult:
    K: np.ndarray
    residual: float
    condition: float


def gain(A_s, B, C, m):
    """Solve (m B - C) K = -(m I + A_s) for the feedback gain."""
    if m <= 0.5:
        raise ValueError(f"tuning parameter must exceed 1/2, got {m}")
    A_s = np.atleast_2d(A_s)
    if A_s.shape[0] != A_s.shape[1] or A_s.shape != (B.shape[0],) * 2:
        A_s = np.diag(np.ravel(A_s))
    N = B.shape[0]
    M = m * B - C
    rhs = -(m * np.eye(N) + A_s)
    cond = float(np.linalg.cond(M))
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditioned(f"cond(mB - C) = {cond:.3e} exceeds {COND_LIMIT:.0e}", cond)
    K = np.linalg.solve(M, rhs)
    # one step of iterative refinement keeps the residual at round-off level
    K += np.linalg.solve(M, rhs - M @ K)
    res = spectral_norm(M @ K - rhs) / spectral_norm(rhs)
    return GainResult(K, res, cond)


@dataclass
class ZetaResult:
    zeta: np.ndarray          # window sum plus analytic remainder
    window: np.ndarray        # sum over the explicit tail window only
    tail_estimate: float      # max relative share of the remainder beyond the window
    series_error: float       # max relative size of the first omitted correction term


def _series_remainder(a, alpha, beta, explicit=64):
    """sum_{p >= a} p^2 / (alpha + beta p^2)^2 and an error indicator.

    ``explicit`` terms are summed directly; the rest is closed by
    Euler-Maclaurin through the third derivative.
    """
    p = a[..., None] + np.arange(explicit)
    al = alpha[..., None]
    head = np.sum(p**2 / (al + beta * p**2) ** 2, axis=-1)
    x = a + explicit
    s = alpha + beta * x**2
    rb = np.sqrt(beta / alpha)
    integral = ((np.pi / 2 - np.arctan(x * rb)) / np.sqrt(alpha * beta) + x / s) / (2 * beta)
    g0 = x**2 / s**2
    g1 = -2 * x * (beta * x**2 - alpha) / s**3
    g3 = -24 * beta * x * (2 * alpha**2 - 5 * alpha * beta * x**2 + beta**2 * x**4) / s**5
    g5 = (-240 * beta**2 * x * (-9 * alpha**3 + 49 * alpha**2 * beta * x**2
                                - 35 * alpha * beta**2 * x**4 + 3 * beta**3 * x**6) / s**7)
    total = head + integral + g0 / 2 - g1 / 12 + g3 / 720
    return total, np.abs(g5) / 30240


def zeta_matrix(sys, tail_count=None, rel_tol=1e-6):
    """Spillover weights zeta[i, j] = sum_{n >= N} <D_i(d_n phi_j), phi_n>^2.

    Modes N .. N+tail_count-1 are summed explicitly. Beyond the window only
    modes sharing the along-edge frequency of phi_j contribute; that 1-D
    series is summed in closed form, giving the converged value.
    """
    N = sys.N
    basis = sys.basis
    if tail_count is None:
        tail_count = 10 * N + 200
    end = N + tail_count
    if basis.count < end:
        raise ValueError(f"basis has {basis.count} modes, zeta needs {end}")
    g = sys.gram[:, N:end]
    window = (1.0 / sys.denominators[:, N:end] ** 2) @ (g**2).T

    dom = basis.domain
    edge = dom.controlled_edge
    Le = dom.edge_length()
    Wp = dom.width if edge in ("left", "right") else dom.height
    other = basis.jx if edge in ("left", "right") else basis.ky
    idx = basis.trace_idx
    q = idx[:N]
    uq, inv = np.unique(q, return_inverse=True)
    # first "other" index beyond the window for each along-edge frequency
    in_window = idx[:end][None, :] == uq[:, None]
    a = np.where(in_window, other[None, :end], 0).max(axis=1) + 1
    beta = np.pi**2 / Wp**2
    alpha = sys.k[:, None] + np.pi**2 * uq[None, :] ** 2 / Le**2
    total, err = _series_remainder(np.broadcast_to(a, alpha.shape).astype(float), alpha, beta)
    norm = 2.0 / math.sqrt(dom.area)
    scale = (basis.trace_amp[:N] * Le / 2.0 * norm * np.pi / Wp) ** 2   # per j
    remainder = total[:, inv] * scale[None, :]
    error = err[:, inv] * scale[None, :]
    zeta = window + remainder
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(zeta > 0, remainder / zeta, 0.0)
        rel_err = np.where(zeta > 0, error / zeta, 0.0)
    series_error = float(rel_err.max())
    if series_error > rel_tol:
        raise TailNotConverged(
            f"zeta tail correction uncertain at {series_error:.2e} (rel_tol {rel_tol:.0e})",
            series_error)
    return ZetaResult(zeta, window, float(share.max()), series_error)


@dataclass
class ControllerDesign:
    N: int
    m: float
    A_s: np.ndarray
    B: np.ndarray
    C: np.ndarray
    K: np.ndarray
    zeta: np.ndarray
    margin: float
    certified: bool
    lifting: object = field(repr=False)
    diagnostics: dict = field(default_factory=dict)

    @property
    def k(self):
        return self.lifting.k


def inverse_norm(M):
    """||M^{-1}||_2 by direct solve; inf when M is singular to working precision."""
    try:
        inv = np.linalg.solve(M, np.eye(M.shape[0]))
    except np.linalg.LinAlgError:
        return math.inf
    return spectral_norm(inv)


def stability_margin(sys, m, tail_count=None, rel_tol=1e-6):
    """Assemble the full controller design for ``sys`` and tuning ``m``."""
    if m <= 0.5:
        raise ValueError(f"tuning parameter must exceed 1/2, got {m}")
    N = sys.N
    lam = sys.basis.lam
    A_s = np.diag(-lam[:N])
    B, C = assemble_BC(sys)
    g = gain(A_s, B, C, m)
    K = g.K
    z = zeta_matrix(sys, tail_count, rel_tol)
    gap2 = (sys.k[:, None] - lam[None, :N]) ** 2
    weighted = float(np.sum(z.zeta * (m + sys.k[:, None]) ** 2 / gap2))
    plain = float(np.sum(z.zeta / gap2))
    norm_K = spectral_norm(K)
    margin = float(lam[N] - m - norm_K**2 / 2.0 * weighted)

    I = np.eye(N)
    ibk = I + B @ K
    ibk_inv_norm = inverse_norm(ibk)
    sv = np.linalg.svd(ibk, compute_uv=False)
    trace_rank = int(np.linalg.matrix_rank(sys.gram[:, :N]))
    # (I + BK)^{-1} = K^{-1} (K^{-1} + B)^{-1}: cross-check bound only
    try:
        k_inv = np.linalg.inv(K)
        factored = spectral_norm(k_inv) * inverse_norm(k_inv + B)
    except np.linalg.LinAlgError:
        k_inv, factored = None, math.inf
    # K^{-1} in closed form: -(m I + A_s)^{-1} (m B - C)
    k_inv_formula = -(m * B - C) / (m - lam[:N])[:, None]
    dd_agreement = (float(np.max(np.abs(k_inv_formula - k_inv) / np.abs(k_inv).max()))
                    if k_inv is not None else math.inf)
    diagnostics = {
        "norm_K": norm_K,
        "norm_IBK_inv": ibk_inv_norm,
        "zeta_weighted_sum": weighted,
        "zeta_sum": plain,
        "gain_residual": g.residual,
        "cond_mB_C": g.condition,
        "cond_IBK": float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf,
        "pinv_norm_IBK": float(1.0 / sv[trace_rank - 1]),
        "trace_rank": trace_rank,
        "factored_bound": factored,
        "k_inverse_agreement": dd_agreement,
        "lambda_next": float(lam[N]),
        "zeta_tail_share": z.tail_estimate,
        "min_gap": sys.min_gap,
    }
    certified = bool(margin > 0 and m > 0.5)
    return ControllerDesign(N, float(m), A_s, B, C, K, z.zeta, margin, certified, sys, diagnostics)


def design_controller(domain, N, m, tail_count=None, basis=None, rel_tol=1e-6):
    """Build basis, lifting and design in one call."""
    if tail_count is None:
        tail_count = 10 * N + 200
    if basis is None or basis.count < N + tail_count:
        basis = enumerate_modes(domain, N + tail_count)
    sys = build_lifting(basis, N)
    return stability_margin(sys, m, tail_count, rel_tol)


def find_min_N(m_rule, N_max, tail_count=None, domain=None, N_min=1):
    """Smallest N <= N_max whose design is certified under m = m_rule(N).

    Returns ``(N, design, table)``; raises :class:`NotFound` with the table
    when no N qualifies.
    """
    domain = domain or Rectangle()
    tail_rule = tail_count if callable(tail_count) else (
        (lambda N: 10 * N + 200) if tail_count is None else (lambda N: tail_count))
    basis = enumerate_modes(domain, N_max + max(tail_rule(N) for N in (N_min, N_max)))
    table = []
    for N in range(N_min, N_max + 1):
        m = float(m_rule(N))
        try:
            d = design_controller(domain, N, m, tail_rule(N), basis)
        except (SingularLifting, IllConditioned, TailNotConverged) as exc:
            table.append({"N": N, "m": m, "margin": math.nan, "error": type(exc).__name__})
            continue
        table.append({"N": N, "m": m, "margin": d.margin, "error": ""})
        if d.certified:
            return N, d, table
    raise NotFound(f"no certified N in [{N_min}, {N_max}]", table)


SWEEP_COLUMNS = ("N", "m", "norm_K", "zeta_sum", "zeta_weighted_sum", "norm_IBK_inv",
                 "pinv_norm_IBK", "cond_IBK", "margin", "certified", "error")


def scaling_sweep(N_list, m, tail_count=None, domain=None):
    """Scaling diagnostics per N; failing rows are kept with their error name."""
    domain = domain or Rectangle()
    N_list = list(N_list)
    if N_list != sorted(N_list):
        raise ValueError("N_list must be ascending")
    tail_rule = (lambda N: 10 * N + 200) if tail_count is None else (lambda N: tail_count)
    basis = enumerate_modes(domain, max(N + tail_rule(N) for N in N_list))
    rows = []
    for N in N_list:
        row = dict.fromkeys(SWEEP_COLUMNS, math.nan)
        row.update(N=N, m=float(m), certified=False, error="")
        try:
            d = design_controller(domain, N, m, tail_rule(N), basis)
        except (SingularLifting, IllConditioned, TailNotConverged, ValueError) as exc:
            row["error"] = type(exc).__name__
            log.warning("sweep row N=%d failed: %s", N, exc)
        else:
            for key in ("norm_K", "zeta_sum", "zeta_weighted_sum", "norm_IBK_inv",
                        "pinv_norm_IBK", "cond_IBK"):
                row[key] = d.diagnostics[key]
            row.update(margin=d.margin, certified=d.certified)
        rows.append(row)
    return rows
