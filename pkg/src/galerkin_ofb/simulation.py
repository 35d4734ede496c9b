"""Modal simulation of the open-loop, state-feedback and output-feedback plants.

The plant state is the lifted field p = z - sum_i D_i U_i in the global sine
basis. The observer is realised through its error eps = p - p_hat, which
lives on the measurement sub-rectangles, each with its own sine basis and
homogeneous Dirichlet data on the sensor lines.

Controlled modes follow ``(I + BK) p_s' = A_s p_s + f_s - C u + B K eps_s'``
with ``u = K (p_s - eps_s)``; the -B u' term is eliminated algebraically.
Using ``A_s - C K = -m (I + B K)`` this is solved as::

    p_s' = -m p_s + (I + BK)^+ (f_s + C K eps_s + B K eps_s')

On single-edge rectangles the edge traces of modes with the same
along-edge frequency are parallel and I + BK is rank deficient; the
pseudo-inverse then selects the minimum-norm solution. For invertible
I + BK the two forms coincide.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import BDF, Radau

from .errors import (AliasingRisk, ConfigError, DegenerateFit, NonFinite, StepSizeUnderflow,
                     UncertifiedDesign)
from .lifting import build_lifting
from .sensors import SensorPartition
from .spectral import ModalGrid, Rectangle, enumerate_modes, project_function
from .synthesis import design_controller

log = logging.getLogger(__name__)

KINDS = ("open_loop", "state_feedback", "output_feedback")


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar map f with f(0) = 0 and declared Lipschitz constant."""

    name: str
    params: tuple = ()
    lipschitz_L: float = 0.0

    def __call__(self, z):
        p = dict(self.params)
        if self.name == "zero":
            return np.zeros_like(z)
        if self.name == "a*sin(z)+b*z":
            return p["a"] * np.sin(z) + p["b"] * z
        if self.name == "a*z":
            return p["a"] * z
        if self.name == "a*tanh(z)":
            return p["a"] * np.tanh(z)
        raise ConfigError(f"unknown nonlinearity {self.name!r}")

    @property
    def zero_at_zero(self):
        return float(self(np.zeros(1))[0]) == 0.0

    def sampled_lipschitz(self, lo=-10.0, hi=10.0, n=200_001):
        z = np.linspace(lo, hi, n)
        q = np.abs(np.diff(self(z)) / np.diff(z))
        return float(q.max())

    def audit(self):
        """Raise ConfigError if f(0) != 0 or the declared L is too small."""
        if not self.zero_at_zero:
            raise ConfigError(f"{self.name}: f(0) != 0")
        est = self.sampled_lipschitz()
        if est > self.lipschitz_L * (1 + 1e-6):
            raise ConfigError(
                f"{self.name}: sampled Lipschitz constant {est:.6g} exceeds declared L={self.lipschitz_L}")


NONLINEARITIES = {
    "zero": (),
    "a*sin(z)+b*z": ("a", "b"),
    "a*z": ("a",),
    "a*tanh(z)": ("a",),
}


def make_nonlinearity(name, L=None, **params):
    """Builtin nonlinearity; L defaults to the exact Lipschitz constant."""
    name = name.replace(" ", "")
    if name not in NONLINEARITIES:
        raise ConfigError(f"unknown nonlinearity {name!r}; choose from {sorted(NONLINEARITIES)}")
    missing = set(NONLINEARITIES[name]) - set(params)
    if missing:
        raise ConfigError(f"{name}: missing parameters {sorted(missing)}")
    vals = {k: float(params[k]) for k in NONLINEARITIES[name]}
    exact = {"zero": 0.0,
             "a*sin(z)+b*z": abs(vals.get("a", 0)) + abs(vals.get("b", 0)),
             "a*z": abs(vals.get("a", 0)),
             "a*tanh(z)": abs(vals.get("a", 0))}[name]
    return Nonlinearity(name, tuple(sorted(vals.items())), exact if L is None else float(L))


def _initial_profile(name, domain):
    W, H = domain.width, domain.height
    profiles = {
        "cos(x)": lambda x, y: np.cos(x),
        "ground_mode": lambda x, y: np.sin(np.pi * x / W) * np.sin(np.pi * y / H),
        "one": lambda x, y: np.ones_like(x),
        "zero": lambda x, y: np.zeros_like(x),
    }
    try:
        return profiles[name.replace(" ", "")]
    except KeyError:
        raise ConfigError(f"unknown initial profile {name!r}; choose from {sorted(profiles)}")


def project_initial(name, basis, amplitude=1.0):
    return amplitude * project_function(_initial_profile(name, basis.domain), basis)


def _interval_overlap(n_glob, length, n_loc, x0, width):
    """int_{x0}^{x0+w} sqrt(2/len) sin(j pi x/len) sqrt(2/w) sin(a pi (x-x0)/w) dx."""
    al = np.pi * np.arange(1, n_glob + 1)[:, None] / length
    be = np.pi * np.arange(1, n_loc + 1)[None, :] / width
    w = width

    def cos_int(gamma):
        # int_0^w cos(gamma u + al x0) du, smooth through gamma = 0
        return w * np.cos(gamma * w / 2 + al * x0) * np.sinc(gamma * w / (2 * np.pi))

    val = 0.5 * (cos_int(al - be) - cos_int(al + be))
    return math.sqrt(2.0 / length) * math.sqrt(2.0 / w) * val


class ObserverPatch:
    """One measurement sub-rectangle with its own sine basis."""

    def __init__(self, rect, global_basis, M_sub, oversample=4):
        self.rect = rect
        self.basis = enumerate_modes(rect.as_rectangle(), M_sub, check_simple=False)
        dom = global_basis.domain
        jg, kg = int(global_basis.jx.max()), int(global_basis.ky.max())
        nx = max(oversample * int(self.basis.jx.max()),
                 math.ceil(oversample * jg * rect.width / dom.width), 16)
        ny = max(oversample * int(self.basis.ky.max()),
                 math.ceil(oversample * kg * rect.height / dom.height), 16)
        self.grid = ModalGrid(self.basis, nx, ny)
        xs = rect.x0 + self.grid.x
        ys = rect.y0 + self.grid.y
        self.sx = np.sin(np.pi * np.outer(np.arange(1, jg + 1), xs) / dom.width)
        self.sy = np.sin(np.pi * np.outer(np.arange(1, kg + 1), ys) / dom.height)
        self._norm = 2.0 / math.sqrt(dom.area)
        self._gidx = (global_basis.jx - 1, global_basis.ky - 1)
        self._gshape = (jg, kg)
        ix = _interval_overlap(jg, dom.width, int(self.basis.jx.max()), rect.x0, rect.width)
        iy = _interval_overlap(kg, dom.height, int(self.basis.ky.max()), rect.y0, rect.height)
        # cross[n, m] = <phi_n, psi_m> over the patch
        self.cross = (ix[global_basis.jx - 1][:, self.basis.jx - 1]
                      * iy[global_basis.ky - 1][:, self.basis.ky - 1])
        self.lam = self.basis.lam

    @property
    def size(self):
        return self.basis.count

    def global_field(self, coeffs):
        cmat = np.zeros(self._gshape)
        np.add.at(cmat, self._gidx, coeffs)
        return self._norm * (self.sx.T @ cmat @ self.sy)


@dataclass
class Trajectory:
    t: np.ndarray
    norm_p: np.ndarray
    norm_eps: np.ndarray
    norm_z: np.ndarray
    u: np.ndarray
    norm_lift: np.ndarray
    patch_norms: np.ndarray | None = None
    states: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)
    truncated: bool = False

    def __len__(self):
        return len(self.t)


class ClosedLoop:
    """Right-hand side and bookkeeping for one scenario.

    State layout: ``[p (M modes), eps_1 (M_sub), ..., eps_P (M_sub)]``.
    """

    def __init__(self, kind, basis, nonlinearity, design=None, partition=None, M_sub=40,
                 oversample=4, pinv_rcond=1e-10):
        if kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}")
        if kind != "open_loop" and design is None:
            raise ConfigError(f"{kind} needs a controller design")
        if kind == "output_feedback" and partition is None:
            raise ConfigError("output feedback needs a sensor partition")
        self.kind = kind
        self.basis = basis
        self.M = basis.count
        self.f = nonlinearity
        self.design = design
        self.grid = ModalGrid(basis, oversample=oversample)
        if self.grid.under_resolved:
            warnings.warn("nonlinearity grid under-resolves the basis", AliasingRisk)
        self.patches = []
        if kind == "output_feedback":
            self.patches = [ObserverPatch(r, basis, M_sub, oversample)
                            for r in partition.subdomains]
        self.partition = partition
        self._offsets = np.cumsum([self.M] + [pt.size for pt in self.patches])
        self.size = int(self._offsets[-1])
        if design is not None:
            N = design.N
            self.N = N
            self.lifting = build_lifting(basis, N)
            self.lift = self.lifting.lift_matrix
            self.lift_k = self.lifting.lift_matrix_k
            self.K = design.K
            self.BK = design.B @ design.K
            self.CK = design.C @ design.K
            ibk = np.eye(N) + self.BK
            self.ibk_pinv = np.linalg.pinv(ibk, rcond=pinv_rcond)
            self.ibk_rank = int(np.linalg.matrix_rank(ibk, tol=pinv_rcond * np.linalg.norm(ibk, 2)))
            self.m = design.m
            self.lam_tail = basis.lam[N:]
        else:
            self.N = 0
        self.lam = basis.lam

    def split(self, y):
        p = y[:self.M]
        eps = [y[a:b] for a, b in zip(self._offsets[:-1], self._offsets[1:])]
        return p, eps

    def eps_s(self, eps):
        out = np.zeros(self.N)
        for pt, e in zip(self.patches, eps):
            out += pt.cross[:self.N] @ e
        return out

    def control(self, y):
        if self.kind == "open_loop":
            return np.zeros(0)
        p, eps = self.split(y)
        if self.kind == "state_feedback":
            return self.K @ p[:self.N]
        return self.K @ (p[:self.N] - self.eps_s(eps))

    def z_coeffs(self, y):
        p, _ = self.split(y)
        if self.kind == "open_loop":
            return p.copy()
        return p + self.lift @ self.control(y)

    def rhs(self, t, y):
        p, eps = self.split(y)
        f = self.f
        if self.kind == "open_loop":
            fz = self.grid.from_grid(f(self.grid.to_grid(p)), self.M)
            return -self.lam * p + fz
        N = self.N
        ps = p[:N]
        if self.kind == "state_feedback":
            u = self.K @ ps
            z = p + self.lift @ u
            fz = self.grid.from_grid(f(self.grid.to_grid(z)), self.M)
            r = fz[:N]
            dps = -self.m * ps + self.ibk_pinv @ r
            du = self.K @ dps
            dp = np.empty_like(p)
            dp[:N] = dps
            dp[N:] = -self.lam_tail * p[N:] + fz[N:] + (self.lift_k @ u)[N:] - (self.lift @ du)[N:]
            return dp
        es = self.eps_s(eps)
        u = self.K @ (ps - es)
        z = p + self.lift @ u
        fz = self.grid.from_grid(f(self.grid.to_grid(z)), self.M)
        deps = []
        des = np.zeros(N)
        for pt, e in zip(self.patches, eps):
            zl = pt.global_field(z)
            el = pt.grid.to_grid(e)
            fp = pt.grid.from_grid(f(zl) - f(zl - el))
            d = -pt.lam * e + fp
            deps.append(d)
            des += pt.cross[:N] @ d
        r = fz[:N] + self.CK @ es + self.BK @ des
        dps = -self.m * ps + self.ibk_pinv @ r
        du = self.K @ (dps - des)
        dp = np.empty_like(p)
        dp[:N] = dps
        dp[N:] = -self.lam_tail * p[N:] + fz[N:] + (self.lift_k @ u)[N:] - (self.lift @ du)[N:]
        return np.concatenate([dp] + deps)

    def initial_state(self, p0, eps0="projection"):
        p0 = np.asarray(p0, dtype=float)
        parts = [p0]
        for pt in self.patches:
            if eps0 == "projection":
                parts.append(pt.cross.T @ p0)
            elif eps0 == "zero":
                parts.append(np.zeros(pt.size))
            else:
                raise ConfigError(f"eps0 must be 'projection' or 'zero', got {eps0!r}")
        return np.concatenate(parts)

    def observables(self, Y):
        """Norm columns for an array of states (one per row)."""
        Y = np.atleast_2d(Y)
        S = len(Y)
        norm_p = np.linalg.norm(Y[:, :self.M], axis=1)
        patch = np.zeros((S, len(self.patches)))
        for k, (a, b) in enumerate(zip(self._offsets[:-1], self._offsets[1:])):
            patch[:, k] = np.linalg.norm(Y[:, a:b], axis=1)
        norm_eps = np.sqrt((patch**2).sum(axis=1))
        u = np.array([self.control(y) for y in Y]).reshape(S, self.N)
        lift = u @ self.lift.T if self.N else np.zeros((S, self.M))
        norm_z = np.linalg.norm(Y[:, :self.M] + lift, axis=1)
        return norm_p, norm_eps, norm_z, u, np.linalg.norm(lift, axis=1), patch


@dataclass
class IntegratorResult:
    t: np.ndarray
    y: np.ndarray
    stats: dict


def integrate(rhs, y0, t_end, samples=101, rtol=1e-6, atol=1e-9, method="BDF", t_eval=None,
              max_steps=200_000):
    """Adaptive implicit integration with dense output at the sample times.

    ``method`` is ``"BDF"`` (variable-order NDF, as ode15s) or ``"Radau"``.
    Raises :class:`StepSizeUnderflow` or :class:`NonFinite`; both carry the
    samples produced so far in ``partial``.
    """
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, samples)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval[0] != 0.0 or np.any(np.diff(t_eval) <= 0) or t_eval[-1] > t_end:
        raise ValueError("sample times must start at 0, increase strictly and end by t_end")
    y0 = np.asarray(y0, dtype=float)
    stats = {"nfev": 0, "steps": 0}

    def fun(t, y):
        stats["nfev"] += 1
        d = rhs(t, y)
        if not np.all(np.isfinite(d)):
            raise NonFinite(f"non-finite derivative at t={t:.6g}", t=t)
        return d

    solver = {"BDF": BDF, "Radau": Radau}[method](fun, 0.0, y0, t_end, rtol=rtol, atol=atol)
    out_t, out_y = [0.0], [y0.copy()]
    k = 1

    def partial():
        return IntegratorResult(np.array(out_t), np.array(out_y), dict(stats))

    while solver.status == "running":
        try:
            msg = solver.step()
        except NonFinite as exc:
            exc.partial = partial()
            raise
        stats["steps"] += 1
        if solver.status == "failed":
            raise StepSizeUnderflow(f"integration failed at t={solver.t:.6g}: {msg}", partial())
        if stats["steps"] > max_steps:
            raise StepSizeUnderflow(f"step limit {max_steps} reached at t={solver.t:.6g}", partial())
        if k < len(t_eval) and t_eval[k] <= solver.t:
            sol = solver.dense_output()
            while k < len(t_eval) and t_eval[k] <= solver.t:
                yk = solver.y if t_eval[k] == solver.t else sol(t_eval[k])
                out_t.append(float(t_eval[k]))
                out_y.append(np.array(yk, dtype=float))
                k += 1
    stats.update(njev=int(solver.njev), nlu=int(solver.nlu), method=method)
    return IntegratorResult(np.array(out_t), np.array(out_y), stats)


@dataclass
class FitResult:
    rate: float
    amplitude: float
    r_squared: float
    degenerate: bool = False


def decay_fit(t, values, window=None, min_samples=10):
    """Least-squares line through (t, log values); ``rate`` is minus the slope."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    if len(t) < min_samples:
        raise DegenerateFit(f"need at least {min_samples} samples, got {len(t)}")
    if np.any(v <= np.finfo(float).tiny):
        return FitResult(math.inf, 0.0, math.nan, degenerate=True)
    logv = np.log(v)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, logv, rcond=None)
    resid = logv - (slope * t + icpt)
    ss_tot = float(np.sum((logv - logv.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(-slope), float(math.exp(icpt)), r2)


def config_hash(config):
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def build_scenario(kind, cfg):
    """Assemble (ClosedLoop, y0, design) from a RunConfig."""
    domain = Rectangle(cfg.width, cfg.height, cfg.controlled_edge)
    f = make_nonlinearity(cfg.nonlinearity, cfg.L, **cfg.nl_params)
    f.audit()
    basis = enumerate_modes(domain, cfg.M_modes)
    design = None
    if kind != "open_loop":
        design = design_controller(domain, cfg.N, cfg.m, cfg.tail_count)
        if not design.certified:
            warnings.warn(
                f"design N={cfg.N}, m={cfg.m} is not certified (margin {design.margin:.4g}); "
                "no decay guarantee applies", UncertifiedDesign, stacklevel=2)
        if cfg.m <= 6 * math.sqrt(cfg.N) * f.lipschitz_L + 0.5 and f.lipschitz_L > 0:
            log.info("m=%g is below 6 sqrt(N) L + 0.5 = %g", cfg.m,
                     6 * math.sqrt(cfg.N) * f.lipschitz_L + 0.5)
    partition = None
    if kind == "output_feedback":
        partition = SensorPartition(domain, cfg.vertical_lines, cfg.horizontal_lines)
    loop = ClosedLoop(kind, basis, f, design, partition, cfg.M_sub, cfg.oversample)
    p0 = project_initial(cfg.z0, basis, cfg.z0_amplitude)
    y0 = loop.initial_state(p0, cfg.eps0)
    return loop, y0, design


def simulate_scenario(kind, cfg, keep_states=False):
    """Run one scenario and return its :class:`Trajectory`."""
    loop, y0, design = build_scenario(kind, cfg)
    meta = {"kind": kind, "config_hash": config_hash(cfg.to_dict()),
            "N": loop.N, "M_modes": loop.M, "state_size": loop.size}
    if design is not None:
        meta.update(certified=design.certified, margin=design.margin, ibk_rank=loop.ibk_rank)
    truncated = False
    try:
        res = integrate(loop.rhs, y0, cfg.t_end, cfg.samples, cfg.rtol, cfg.atol, cfg.method)
    except (StepSizeUnderflow, NonFinite) as exc:
        res = exc.partial
        truncated = True
        meta["failure"] = str(exc)
        log.error("integration stopped early: %s", exc)
    meta["integrator"] = res.stats
    norm_p, norm_eps, norm_z, u, norm_lift, patch = loop.observables(res.y)
    return Trajectory(res.t, norm_p, norm_eps, norm_z, u, norm_lift, patch,
                      res.y if keep_states else None, meta, truncated)
