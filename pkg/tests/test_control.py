import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monoctrl.control import (ControlProblem, PreconditionError, check_source_admissible,
                              gradient, gradient_check, matched_static_interval, objective,
                              reconstruct_stimulation, run_ladder, synthesize_null_control,
                              taylor_remainders)
from monoctrl.geometry import MovingDomain
from monoctrl.grid import Grid
from monoctrl.models import IonicModel, LinearizationCoeffs, linearize


@pytest.fixture(scope="module")
def small(sup):
    g = Grid(1.0, 1.0, 32, 32)
    X, T = g.XT
    c = linearize(IonicModel(), 0.05 * np.cos(np.pi * X) * (1 - T), 0.0 * X, g)
    return g, c, sup.omega


def _prob(small, ws=None, amp=1.0, **kw):
    g, c, om = small
    return ControlProblem.from_pq(c, g, om, amp * np.cos(np.pi * g.x), np.zeros(g.n + 1),
                                  weights=ws, **kw)


def test_zero_data_gives_zero_control(small, ws):
    rep = synthesize_null_control(_prob(small, ws, amp=0.0))
    assert np.all(rep.h == 0.0) and rep.J_value == 0.0 and rep.converged


def test_homogeneity(small):
    # doubling is exact in floating point, so CG takes the same path on scaled data
    base = _prob(small, eps_pen=1e-6, tol=1e-12, max_iter=2000)
    r1 = synthesize_null_control(base)
    r2 = synthesize_null_control(base.scaled(2.0))
    g = small[0]
    assert g.norm(r2.h - 2.0 * r1.h) <= 1e-10 * g.norm(2.0 * r1.h)
    assert np.allclose(r2.terminal_norms, 2.0 * np.array(r1.terminal_norms), rtol=1e-10)


@settings(max_examples=5, deadline=None)
@given(st.floats(0.1, 10.0))
def test_homogeneity_any_factor(small, a):
    base = _prob(small, eps_pen=1e-4, tol=1e-12, max_iter=2000)
    h1 = synthesize_null_control(base).h
    ha = synthesize_null_control(base.scaled(a)).h
    g = small[0]
    # rounding in the scaled data is amplified by the condition number of the optimality system
    assert g.norm(ha - a * h1) <= 1e-8 * g.norm(a * h1)


@pytest.mark.parametrize("weighted", [False, True])
def test_gradient_matches_finite_differences(small, ws, weighted):
    prob = _prob(small, ws if weighted else None, eps_pen=1e-3)
    probe = np.random.default_rng(3).standard_normal(small[0].shape)
    assert gradient_check(prob, probe, n_dirs=5, seed=7) <= 1e-5


def test_gradient_vanishes_at_zero_for_zero_data(small):
    prob = _prob(small, amp=0.0)
    assert np.all(gradient(prob, np.zeros(small[0].shape)) == 0.0)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_taylor_remainder_second_order(small, seed):
    prob = _prob(small, eps_pen=1e-2)
    probe = np.random.default_rng(seed).standard_normal(small[0].shape)
    r = taylor_remainders(prob, probe, [1e-1, 5e-2, 2.5e-2], seed=seed)
    # J is quadratic: the remainder is exactly e^2 <H d, d> / 2
    assert np.allclose(r[:-1] / r[1:], 4.0, rtol=1e-4)


def test_control_is_hard_masked(small, ws):
    rep = synthesize_null_control(_prob(small, ws))
    assert np.all(rep.h[small[2].mask(small[0]) == 0.0] == 0.0)


def test_optimal_control_beats_zero_and_cg_is_monotone(small, ws):
    prob = _prob(small, ws)
    rep = synthesize_null_control(prob)
    assert rep.J_value <= objective(prob, np.zeros(small[0].shape))
    hist = np.array(rep.J_history)
    assert np.all(np.diff(hist) <= 1e-12 * abs(hist[0]))


def test_full_domain_static_support_drives_to_zero():
    g = Grid(1.0, 1.0, 32, 32)
    zero = np.zeros(g.shape)
    c = LinearizationCoeffs(ly=zero, lp=zero, lq=zero, A=zero)
    full = MovingDomain.static(1.0, 1.0, 0.0, 1.0)
    prob = ControlProblem.from_pq(c, g, full, np.cos(np.pi * g.x), np.zeros(33), eps_pen=1e-10,
                                  tol=1e-10, max_iter=2000)
    # omega(t) is open, so the boundary nodes are added explicitly
    prob = prob.with_mask(np.ones(g.shape))
    rep = synthesize_null_control(prob)
    assert rep.converged
    assert max(rep.terminal_norms) <= 1e-6


def test_ladder_terminal_norms_nonincreasing(small, ws):
    # the penalized terminal state (theta, q)(T) is monotone in eps; single components need not be
    rows = run_ladder(_prob(small, ws, tol=1e-12), [1e-2, 1e-4, 1e-6, 1e-8])
    vals = [np.hypot(r["q_T"], r["theta_T"]) for r in rows]
    assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_precondition_errors(small):
    g, c, om = small
    with pytest.raises(PreconditionError):
        _prob(small, eps_pen=0.0)
    with pytest.raises(PreconditionError):
        _prob(small).with_mask(0.5 * np.ones(g.shape))
    bad = _prob(small)
    bad.G = np.full(g.shape, np.inf)
    with pytest.raises(PreconditionError):
        check_source_admissible(bad)
    with pytest.raises(ValueError):
        gradient_check(_prob(small), np.zeros(g.shape), n_dirs=2)


def test_stimulation_reconstruction():
    m = IonicModel(gamma=2.0, beta=0.5)
    t = np.linspace(0, 1, 5)[:, None]
    h = np.ones((5, 3))
    assert np.allclose(reconstruct_stimulation(h, m, t), np.exp(-t) / 2.0 * h)
    with pytest.raises(ValueError):
        reconstruct_stimulation(h, IonicModel(gamma=0.0), t)


def test_matched_static_interval_measure(dom):
    # omega0 is clipped near x = 0 and x = L, so its mean measure is below 2 * half_width
    lo, hi = matched_static_interval(dom)
    assert 0.3 < hi - lo < 0.4
    assert lo + hi == pytest.approx(1.0)
    st_lo, st_hi = matched_static_interval(MovingDomain.static(1.0, 1.0, 0.3, 0.7))
    assert (st_lo, st_hi) == pytest.approx((0.3, 0.7))
