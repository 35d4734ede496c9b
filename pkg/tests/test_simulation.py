import math
import warnings

import numpy as np
import pytest

from galerkin_ofb.config import RunConfig
from galerkin_ofb.errors import ConfigError, DegenerateFit, NonFinite
from galerkin_ofb.sensors import SubRect
from galerkin_ofb.simulation import (ClosedLoop, ObserverPatch, decay_fit, integrate,
                                     make_nonlinearity, project_initial, simulate_scenario)
from galerkin_ofb.spectral import ModalGrid, Rectangle, enumerate_modes, reconstruct_field

FAST = dict(M_modes=40, M_sub=20, samples=41)


def test_nonlinearity_builtins():
    f = make_nonlinearity("a*sin(z)+b*z", a=50, b=50)
    assert f.lipschitz_L == 100.0
    assert f(np.array([0.0]))[0] == 0.0
    f.audit()
    assert make_nonlinearity("zero").lipschitz_L == 0.0
    assert make_nonlinearity("a*tanh(z)", a=-3).lipschitz_L == 3.0


def test_declared_L_audit():
    with pytest.raises(ConfigError):
        make_nonlinearity("a*z", L=1.0, a=2.0).audit()
    make_nonlinearity("a*z", L=2.0, a=2.0).audit()


def test_unknown_nonlinearity():
    with pytest.raises(ConfigError):
        make_nonlinearity("z**3")
    with pytest.raises(ConfigError):
        make_nonlinearity("a*z")


def _quad_overlap(jg, W, a, x0, w, n=400):
    t, wt = np.polynomial.legendre.leggauss(n)
    x = x0 + (t + 1) * w / 2
    return float(np.sum(wt * w / 2 * math.sqrt(2 / W) * np.sin(jg * np.pi * x / W)
                        * math.sqrt(2 / w) * np.sin(a * np.pi * (x - x0) / w)))


def test_cross_projection_against_quadrature():
    dom = Rectangle(1.3, 0.9)
    gb = enumerate_modes(dom, 30)
    rect = SubRect(0.4, 1.1, 0.2, 0.9)
    patch = ObserverPatch(rect, gb, 12)
    for n in range(30):
        for m in range(12):
            ref = (_quad_overlap(gb.jx[n], 1.3, patch.basis.jx[m], 0.4, 0.7)
                   * _quad_overlap(gb.ky[n], 0.9, patch.basis.ky[m], 0.2, 0.7))
            assert patch.cross[n, m] == pytest.approx(ref, abs=1e-12)


def test_patch_global_field():
    gb = enumerate_modes(Rectangle(), 30)
    patch = ObserverPatch(SubRect(0.5, 1.0, 0.0, 1.0), gb, 10)
    c = np.random.default_rng(0).standard_normal(30)
    ref = reconstruct_field(c, gb, (0.5 + patch.grid.x, patch.grid.y))
    np.testing.assert_allclose(patch.global_field(c), ref, atol=1e-12)


def test_projection_identity_and_zero():
    b = enumerate_modes(Rectangle(), 60)
    g = ModalGrid(b)
    p = np.random.default_rng(4).standard_normal(60)
    f = make_nonlinearity("a*z", a=1.0)
    np.testing.assert_allclose(g.from_grid(f(g.to_grid(p)), 60), p, atol=1e-8)
    zero = make_nonlinearity("zero")
    assert np.all(g.from_grid(zero(g.to_grid(p)), 60) == 0)


def test_nonlinear_projection_against_fine_oracle():
    b = enumerate_modes(Rectangle(), 120)
    p0 = project_initial("cos(x)", b)
    f = make_nonlinearity("a*sin(z)+b*z", a=50, b=50)
    coarse = ModalGrid(b, oversample=4)
    fine = ModalGrid(b, oversample=16)
    a = coarse.from_grid(f(coarse.to_grid(p0)), 120)
    ref = fine.from_grid(f(fine.to_grid(p0)), 120)
    np.testing.assert_allclose(a, ref, atol=1e-6)


def test_integrate_scalar_decay():
    lam = 8 * math.pi**2
    res = integrate(lambda t, y: -lam * y, [1.0], 0.1, samples=21, rtol=1e-9, atol=1e-14)
    np.testing.assert_allclose(res.y[:, 0], np.exp(-lam * res.t), rtol=1e-6, atol=1e-14)


def test_integrate_sample_times_exact():
    t_eval = np.array([0.0, 0.013, 0.2, 0.77, 1.0])
    res = integrate(lambda t, y: -y, [1.0, 2.0], 1.0, t_eval=t_eval)
    assert np.array_equal(res.t, t_eval)


def test_integrate_validation():
    with pytest.raises(ValueError):
        integrate(lambda t, y: -y, [1.0], 0.0)
    with pytest.raises(ValueError):
        integrate(lambda t, y: -y, [1.0], 1.0, rtol=0)


def test_integrate_nonfinite_keeps_partial():
    def rhs(t, y):
        return np.array([np.nan]) if t > 0.5 else -y

    with pytest.raises(NonFinite) as exc:
        integrate(rhs, [1.0], 1.0, samples=11)
    part = exc.value.partial
    assert part.t[0] == 0.0 and part.t[-1] <= 0.5
    assert exc.value.t > 0.5


def test_decay_fit_synthetic():
    t = np.linspace(0, 2, 50)
    fit = decay_fit(t, 2.5 * np.exp(-3 * t))
    assert fit.rate == pytest.approx(3.0, abs=1e-6)
    assert fit.amplitude == pytest.approx(2.5, rel=1e-6)
    assert decay_fit(t, np.full(50, 4.0)).rate == pytest.approx(0.0, abs=1e-12)


def test_decay_fit_degenerate():
    t = np.linspace(0, 1, 20)
    with pytest.raises(DegenerateFit):
        decay_fit(t[:5], np.ones(5))
    v = np.exp(-t)
    v[-1] = 0.0
    fit = decay_fit(t, v)
    assert fit.degenerate and fit.rate == math.inf


def test_state_feedback_controlled_modes_decay_at_m():
    cfg = RunConfig(nonlinearity="zero", nl_params={}, L=None, N=1, m=0.6, t_end=2.0,
                    rtol=1e-9, atol=1e-13, **FAST)
    from galerkin_ofb.simulation import build_scenario
    loop, y0, _ = build_scenario("state_feedback", cfg)
    res = integrate(loop.rhs, y0, cfg.t_end, cfg.samples, cfg.rtol, cfg.atol)
    np.testing.assert_allclose(res.y[:, 0], y0[0] * np.exp(-0.6 * res.t), rtol=1e-6)


def test_state_feedback_envelope_m10():
    cfg = RunConfig(nonlinearity="zero", nl_params={}, L=None, N=1, m=10.0, t_end=0.5, **FAST)
    tr = simulate_scenario("state_feedback", cfg)
    assert np.all(tr.norm_p**2 <= np.exp(-19 * tr.t) * tr.norm_p[0] ** 2 * (1 + 1e-9))
    fit = decay_fit(tr.t, tr.norm_p**2)
    assert fit.rate >= 19 - 1e-6


def test_uncoupled_tail_modes_pure_decay():
    # modes whose along-edge frequency differs from every controlled mode see no lift
    cfg = RunConfig(nonlinearity="zero", nl_params={}, L=None, N=1, m=5.0, t_end=0.1,
                    rtol=1e-10, atol=1e-14, **FAST)
    from galerkin_ofb.simulation import build_scenario
    loop, y0, _ = build_scenario("state_feedback", cfg)
    res = integrate(loop.rhs, y0, cfg.t_end, cfg.samples, cfg.rtol, cfg.atol)
    b = loop.basis
    for n in np.flatnonzero(b.ky != b.ky[0])[:5]:
        np.testing.assert_allclose(res.y[:, n], y0[n] * np.exp(-b.lam[n] * res.t),
                                   rtol=1e-6, atol=1e-12)


def test_linear_error_modes_decouple():
    cfg = RunConfig(nonlinearity="zero", nl_params={}, L=None, t_end=0.05,
                    rtol=1e-10, atol=1e-14, **FAST)
    from galerkin_ofb.simulation import build_scenario
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        loop, y0, _ = build_scenario("output_feedback", cfg)
    res = integrate(loop.rhs, y0, cfg.t_end, cfg.samples, cfg.rtol, cfg.atol)
    pt = loop.patches[0]
    a = loop.M
    for mm in range(4):
        np.testing.assert_allclose(res.y[:, a + mm], y0[a + mm] * np.exp(-pt.lam[mm] * res.t),
                                   rtol=1e-6, atol=1e-12)


def test_observer_consistency():
    base = RunConfig(nonlinearity="zero", nl_params={}, L=None, eps0="zero", **FAST)
    a = simulate_scenario("output_feedback", base)
    b = simulate_scenario("state_feedback", base)
    tol = 10 * (base.atol + base.rtol * a.norm_p.max())
    assert np.max(np.abs(a.norm_p - b.norm_p)) <= tol
    assert np.all(a.norm_eps == 0)


def test_trajectory_invariants():
    tr = simulate_scenario("output_feedback", RunConfig(t_end=0.2, **FAST))
    assert tr.t[0] == 0 and np.all(np.diff(tr.t) > 0)
    assert tr.u.shape == (len(tr), 6)
    assert np.all(tr.norm_z <= tr.norm_p + tr.norm_lift + 1e-12)
    assert tr.metadata["ibk_rank"] == 3
    assert not tr.truncated


def test_open_loop_grows():
    tr = simulate_scenario("open_loop", RunConfig(t_end=0.1, **FAST))
    assert -decay_fit(tr.t, tr.norm_z).rate > 0


def test_guaranteed_envelope_per_subdomain():
    cfg = RunConfig(vertical_lines=(0.25, 0.5, 0.75), t_end=0.1, **FAST)
    tr = simulate_scenario("output_feedback", cfg)
    lam1 = 17 * math.pi**2
    env = tr.patch_norms[0] * np.exp(np.outer(tr.t, np.full(4, 100 - lam1)))
    assert np.all(tr.patch_norms <= env * (1 + 1e-9))


def test_refinement_in_tolerance():
    cfg = RunConfig(t_end=0.2, nonlinearity="a*tanh(z)", nl_params={"a": 20.0}, L=20.0, **FAST)
    a = simulate_scenario("output_feedback", cfg)
    b = simulate_scenario("output_feedback", cfg.replace(rtol=cfg.rtol / 2, atol=cfg.atol / 2))
    assert abs(a.norm_z[-1] - b.norm_z[-1]) < 10 * (cfg.rtol * a.norm_z[-1] + cfg.atol) * 10


def test_closed_loop_needs_design():
    b = enumerate_modes(Rectangle(), 10)
    with pytest.raises(ConfigError):
        ClosedLoop("state_feedback", b, make_nonlinearity("zero"))
    with pytest.raises(ConfigError):
        ClosedLoop("bogus", b, make_nonlinearity("zero"))
