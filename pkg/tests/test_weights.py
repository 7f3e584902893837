from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monoctrl.grid import Grid
from monoctrl.weights import (CarlemanParams, build_eta, build_weights, eval_weights, l_profile,
                              r_derivatives, r_profile, verify_eta, verify_pointwise_estimates)

T, TAU = 1.0, 0.15


def test_r_profile_examples():
    assert r_profile(TAU / 4, T, TAU) == pytest.approx(4 / TAU, rel=1e-14)
    assert r_profile(T / 2, T, TAU) == 1.0
    assert r_profile(T - TAU / 4, T, TAU) == pytest.approx(4 / TAU, rel=1e-14)


def test_r_profile_domain():
    for t in (0.0, T, -0.1):
        with pytest.raises(ValueError):
            r_profile(t, T, TAU)


def test_l_profile_examples():
    assert l_profile(0.0, T, TAU) == 1.0
    assert l_profile(T / 2, T, TAU) == 1.0
    assert l_profile(T - TAU / 4, T, TAU) == pytest.approx(4 / TAU)
    with pytest.raises(ValueError):
        l_profile(T, T, TAU)


def test_r_bridge_is_monotone_and_matches_derivatives():
    t = np.linspace(TAU / 2, TAU, 2001)
    r, r1, r2 = r_derivatives(t, T, TAU)
    assert np.all(np.diff(r) < 0)
    h = 1e-6
    fd1 = (r_profile(t[1:-1] + h, T, TAU) - r_profile(t[1:-1] - h, T, TAU)) / (2 * h)
    assert np.max(np.abs(fd1 - r1[1:-1])) / np.max(np.abs(r1)) < 1e-6
    fd2 = (r_derivatives(t[1:-1] + h, T, TAU)[1] - r_derivatives(t[1:-1] - h, T, TAU)[1]) / (2 * h)
    assert np.max(np.abs(fd2 - r2[1:-1])) / np.max(np.abs(r2)) < 1e-6


@settings(max_examples=80, deadline=None)
@given(st.floats(1e-4, 0.9999))
def test_r_symmetric_and_at_least_one(t):
    assert r_profile(t, T, TAU) == pytest.approx(r_profile(T - t, T, TAU), rel=1e-12)
    assert r_profile(t, T, TAU) >= 1.0


def test_eta_example_constants(dom):
    eta = build_eta(dom)
    assert eta.D == pytest.approx(0.9025, abs=1e-12)
    assert eta.M == pytest.approx(3.61, abs=1e-12)
    ts = np.linspace(0, 1, 1001)
    assert np.min(eta.min_in_space(ts)) == pytest.approx(2.7075, abs=1e-12)
    assert np.all(eta.derivatives(np.zeros_like(ts), ts)["x"] >= 0.1 - 1e-12)


def test_eta_properties_hold(dom):
    chk = verify_eta(build_eta(dom), TAU)
    assert chk.passed, chk.properties
    assert chk.min_eta == 0.75 * chk.max_eta


def test_plateau_closed_forms(ws):
    lam = ws.params.lam
    x = np.linspace(0, 1, 33)
    for t in (TAU, 0.3, 0.5):
        d = ws.derivatives(x, np.full_like(x, t))
        e = np.exp(lam * ws.eta(x, t))
        assert np.allclose(d["alpha"], ws.E - e, rtol=1e-14)
        assert np.allclose(d["xi"], e, rtol=1e-14)
        et = ws.eta.derivatives(x, np.full_like(x, t))["t"]
        assert np.allclose(d["alpha_t"], -lam * d["xi"] * et, rtol=1e-12, atol=1e-12 * ws.E)


def test_weights_positive(ws, g128):
    tt, xx = np.meshgrid(g128.t[1:-1], g128.x, indexing="ij")
    a, xi = ws.alpha_xi(xx, tt)
    rr = ws.r(tt)[0]
    assert np.all(xi > 0)
    assert np.all(a >= rr * (ws.E - np.exp(ws.params.lam * ws.eta.M)) * (1 - 1e-12))


def test_eval_weights_domain_and_clamp(ws):
    with pytest.raises(ValueError):
        eval_weights(ws, 0.5, 0.0)
    a = eval_weights(ws, 0.3, ws.t_cap)
    b = eval_weights(ws, 0.3, 0.5 * (ws.t_cap + ws.T))
    assert a.alpha == b.alpha and a.rho2 == b.rho2


def test_rho_monotone_and_divergent(ws):
    ws_u = replace(ws, t_cap=np.inf)
    t = np.linspace(0.5, 0.999, 500)
    lr = ws_u.log_rho(t)
    rep = verify_pointwise_estimates(ws, Grid(1, 1, 128, 128))
    for i in range(4):
        tail = t >= rep.t_star[f"rho{i + 1}"]
        assert np.all(np.diff(lr[i][tail]) >= -1e-12)
        assert lr[i][-1] > lr[i][0] + 5.0
    # rho2 is monotone from T/2 on
    assert np.all(np.diff(lr[1]) >= -1e-12)


def test_rho4_dominates_and_alpha_x_constant(ws):
    g = Grid(1, 1, 128, 128)
    rep = verify_pointwise_estimates(ws, g)
    assert rep.rho4_dominates
    assert rep.finite
    # |alpha_x| / (lam xi) = |eta_x| exactly, so the fitted constant is 2 max|x - c(t)|
    t = g.t[(g.t > 0) & (g.t <= ws.t_cap)]
    c = ws.eta.dom.center(t)
    expect = 2 * np.max(np.maximum(c, 1 - c))
    assert rep.constants["alpha_x"] == pytest.approx(expect, rel=1e-12)


def test_plateau_alpha_t_bound(ws):
    lam = ws.params.lam
    x = np.linspace(0, 1, 65)
    t = np.linspace(ws.params.tau, 0.5, 41)
    tt, xx = np.meshgrid(t, x, indexing="ij")
    d = ws.derivatives(xx, tt)
    et = ws.eta.derivatives(xx, tt)["t"]
    ratio = np.abs(d["alpha_t"]) / (lam * d["xi"] ** 2)
    assert np.allclose(ratio, np.abs(et) * np.exp(-lam * ws.eta(xx, tt)), rtol=1e-12, atol=1e-300)
    assert np.all(ratio <= np.max(np.abs(et)))


def test_params_validation(dom):
    with pytest.raises(ValueError):
        CarlemanParams(0.0, 1.5, 0.1).validate(1.0)
    with pytest.raises(ValueError):
        CarlemanParams(1.0, 0.5, 0.1).validate(1.0)
    with pytest.raises(ValueError):
        CarlemanParams(1.0, 1.5, 0.6).validate(1.0)
    with pytest.raises(ValueError):
        CarlemanParams(1.0, 1.5, 0.16667).validate(1.0, 1 / 6, 5 / 6 + 1e-3)
    with pytest.raises(ValueError):
        build_weights(dom, t_cap=0.4)
