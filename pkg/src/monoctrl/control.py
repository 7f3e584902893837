"""Null controls for the linear theta-q system.

The weighted functional

    J(h) = 1/2 <<rho3^2 1_w h, h>> + 1/2 <<rho1^2 theta, theta>>
         + 1/2 <<rho2^2 q, q>> + 1/(2 eps) |(theta, q)(T)|^2

is quadratic in the control ``h`` (which is hard-masked to the moving
support), so it is minimized by preconditioned conjugate gradients. The
gradient comes from the exact discrete adjoint of the theta-q stepper.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import MovingDomain
from .grid import Grid
from .models import IonicModel, LinearizationCoeffs
from .pde import ThetaQSystem, theta_initial
from .weights import WeightSet


class PreconditionError(ValueError):
    """Problem data violate an admissibility requirement."""


@dataclass
class ControlProblem:
    grid: Grid
    lp: np.ndarray
    A: np.ndarray
    mask: np.ndarray
    theta0: np.ndarray
    q0: np.ndarray
    G: np.ndarray
    eps_pen: float = 1e-8
    weights: Optional[WeightSet] = None
    max_iter: int = 500
    tol: float = 1e-8

    def __post_init__(self):
        g = self.grid
        self.lp = g.as_field(self.lp, "lp")
        self.A = g.as_field(self.A, "A")
        self.mask = g.check_field(self.mask, "mask")
        self.theta0 = g.check_profile(self.theta0, "theta0")
        self.q0 = g.check_profile(self.q0, "q0")
        self.G = g.as_field(self.G, "G")
        if not self.eps_pen > 0:
            raise PreconditionError("penalty eps_pen must be positive")
        if not np.all(np.isin(self.mask, (0.0, 1.0))):
            raise PreconditionError("mask must be a 0/1 field")

    @classmethod
    def from_pq(cls, coeffs: LinearizationCoeffs, grid: Grid, omega: MovingDomain, p0, q0,
                G=None, weights: Optional[WeightSet] = None, eps_pen: float = 1e-8, **kw):
        """Build from ``(p0, q0)``; ``theta0 = p0 + K(0) q0`` uses the discrete operator."""
        th0 = theta_initial(coeffs, grid, p0, q0)
        return cls(grid, coeffs.lp, coeffs.A, omega.mask(grid), th0, q0, G,
                   eps_pen, weights, **kw)

    def with_mask(self, mask) -> "ControlProblem":
        return replace(self, mask=np.asarray(mask, dtype=float))

    def scaled(self, factor: float) -> "ControlProblem":
        return replace(self, theta0=factor * self.theta0, q0=factor * self.q0, G=factor * self.G)

    def rho_fields(self):
        """Normalized ``rho_1..rho_4`` as ``(m+1, 1)`` columns (all ones without weights)."""
        if self.weights is None:
            return np.ones((4, self.grid.m + 1, 1))
        return self.weights.rho_normalized(self.grid.t)[:, :, None]


@dataclass
class ControlReport:
    h: np.ndarray
    J_value: float
    terminal_norms: tuple
    weighted_norms: dict
    cg_iterations: int
    residual: float
    converged: bool
    J_history: list = field(default_factory=list)
    theta: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None

    def summary(self) -> str:
        p, q, th = self.terminal_norms
        lines = [
            f"J = {self.J_value!r}",
            f"|p(T)| = {p!r}",
            f"|q(T)| = {q!r}",
            f"|theta(T)| = {th!r}",
            f"cg_iterations = {self.cg_iterations}",
            f"relative_residual = {self.residual!r}",
            f"converged = {self.converged}",
        ]
        lines += [f"{k} = {v!r}" for k, v in self.weighted_norms.items()]
        return "\n".join(lines)


class _Functional:
    """Forward/adjoint plumbing for ``J`` on one problem."""

    def __init__(self, prob: ControlProblem):
        self.prob = prob
        self.g = prob.grid
        self.sys = ThetaQSystem(prob.grid, prob.lp, prob.A)
        r1, r2, r3, r4 = prob.rho_fields()
        self.r1s, self.r2s, self.r3s = r1**2, r2**2, r3**2
        self.r4 = r4
        self.chi = prob.mask

    def state(self, h, homogeneous=False):
        p = self.prob
        if homogeneous:
            z = np.zeros(self.g.n + 1)
            return self.sys.forward(z, z, self.chi * h)
        return self.sys.forward(p.theta0, p.q0, p.G + self.chi * h)

    def value(self, h, sol=None) -> float:
        sol = sol or self.state(h)
        g, eps = self.g, self.prob.eps_pen
        return 0.5 * (g.inner(self.r3s * self.chi * h, h) + g.inner(self.r1s * sol.theta, sol.theta)
                      + g.inner(self.r2s * sol.q, sol.q)
                      + (g.space_inner(sol.theta[-1], sol.theta[-1])
                         + g.space_inner(sol.q[-1], sol.q[-1])) / eps)

    def state_gradient(self, sol):
        """``chi * g`` where ``g`` is the adjoint source density of the state terms."""
        eps = self.prob.eps_pen
        ad = self.sys.adjoint(sol.theta[-1] / eps, sol.q[-1] / eps,
                              self.r1s * sol.theta, self.r2s * sol.q)
        return self.chi * ad.source_density

    def gradient(self, h, sol=None):
        sol = sol or self.state(h)
        return self.r3s * self.chi * h + self.state_gradient(sol)

    def hess(self, d):
        return self.r3s * self.chi * d + self.state_gradient(self.state(d, homogeneous=True))


def _norms(fun: _Functional, h, sol) -> dict:
    g = fun.g
    r1, r2, r3, r4 = np.sqrt(fun.r1s), np.sqrt(fun.r2s), np.sqrt(fun.r3s), fun.r4
    sq4 = np.sqrt(r4)
    qt = np.gradient(sol.q, g.dt, axis=0)
    qx = np.diff(sol.q, axis=1) / g.dx
    return {
        "rho1_theta": g.norm(r1 * sol.theta),
        "rho2_q": g.norm(r2 * sol.q),
        "rho3_h": g.norm(r3 * fun.chi * h),
        "rho4half_q_H1t": float(np.sqrt(g.norm(sq4 * sol.q) ** 2 + g.norm(sq4 * qt) ** 2)),
        "rho4half_q_LinfH1": float(np.max(sq4[:, 0] * np.sqrt(
            np.sum(g.mu * sol.q**2, axis=1) + g.dx * np.sum(qx**2, axis=1)))),
        "rho4half_p_L4": float(np.sum(g.weights * (sq4 * sol.p) ** 4) ** 0.25),
        "rho4third_p_L6": float(np.sum(g.weights * (r4 ** (1 / 3) * sol.p) ** 6) ** (1 / 6)),
    }


def check_source_admissible(prob: ControlProblem) -> float:
    """Discrete ``|rho4 G|``; raises :class:`PreconditionError` when not finite."""
    r4 = prob.rho_fields()[3]
    val = prob.grid.norm(r4 * prob.G) if np.all(np.isfinite(prob.G)) else np.inf
    if not np.isfinite(val):
        raise PreconditionError("rho4-weighted norm of the source G is not finite")
    return float(val)


def synthesize_null_control(prob: ControlProblem, h0=None) -> ControlReport:
    """Minimize ``J`` by PCG with diagonal preconditioner ``rho3^2`` on the support.

    Stops when the preconditioned residual norm drops below ``tol`` relative
    to its initial value, or after ``max_iter`` iterations.
    """
    check_source_admissible(prob)
    fun = _Functional(prob)
    g, chi = fun.g, fun.chi
    inner = g.inner
    h = np.zeros(g.shape) if h0 is None else chi * g.check_field(h0, "h0")

    sol = fun.state(h)
    J = fun.value(h, sol)
    history = [J]
    r = -fun.gradient(h, sol)
    z = chi * r / fun.r3s
    rz = inner(r, z)
    rz0 = rz
    it = 0
    converged = rz0 <= 0.0
    while not converged and it < prob.max_iter:
        if it == 0:
            d = z.copy()
        Hd = fun.hess(d)
        dHd = inner(d, Hd)
        if dHd <= 0:
            break
        alpha = rz / dHd
        h += alpha * d
        r -= alpha * Hd
        J -= 0.5 * alpha * rz
        history.append(J)
        z = chi * r / fun.r3s
        rz_new = inner(r, z)
        it += 1
        if np.sqrt(max(rz_new, 0.0) / rz0) <= prob.tol:
            converged = True
            rz = rz_new
            break
        d = z + (rz_new / rz) * d
        rz = rz_new

    sol = fun.state(h)
    Jv = fun.value(h, sol)
    res = 0.0 if rz0 <= 0 else float(np.sqrt(max(rz, 0.0) / rz0))
    term = (g.space_norm(sol.p[-1]), g.space_norm(sol.q[-1]), g.space_norm(sol.theta[-1]))
    return ControlReport(chi * h, Jv, term, _norms(fun, h, sol), it, res, converged,
                         history, sol.theta, sol.q, sol.p)


def objective(prob: ControlProblem, h) -> float:
    return _Functional(prob).value(prob.mask * h)


def gradient(prob: ControlProblem, h) -> np.ndarray:
    """Gradient of ``J`` in the discrete space-time inner product."""
    fun = _Functional(prob)
    return fun.gradient(prob.mask * h)


def gradient_check(prob: ControlProblem, h_probe, n_dirs: int = 5, seed: int = 0,
                   step: float = 1e-3) -> float:
    """Max relative error between adjoint and central-difference directional derivatives."""
    if n_dirs < 3:
        raise ValueError("use at least 3 directions")
    rng = np.random.default_rng(seed)
    fun = _Functional(prob)
    h = prob.mask * prob.grid.check_field(h_probe, "h_probe")
    gr = fun.gradient(h)
    scale = max(prob.grid.norm(h), 1.0)
    worst = 0.0
    for _ in range(n_dirs):
        d = prob.mask * rng.standard_normal(prob.grid.shape)
        d *= scale / prob.grid.norm(d)
        e = step
        fd = (fun.value(h + e * d) - fun.value(h - e * d)) / (2 * e)
        ad = prob.grid.inner(gr, d)
        worst = max(worst, abs(fd - ad) / max(abs(fd), abs(ad), 1e-300))
    return worst


def taylor_remainders(prob: ControlProblem, h_probe, steps: Sequence[float], seed: int = 0):
    """``|J(h + e d) - J(h) - e <grad, d>|`` for each step ``e`` (second order in ``e``)."""
    rng = np.random.default_rng(seed)
    fun = _Functional(prob)
    h = prob.mask * prob.grid.check_field(h_probe, "h_probe")
    d = prob.mask * rng.standard_normal(prob.grid.shape)
    J0 = fun.value(h)
    slope = prob.grid.inner(fun.gradient(h), d)
    return np.array([abs(fun.value(h + e * d) - J0 - e * slope) for e in steps])


def reconstruct_stimulation(h, model: IonicModel, t) -> np.ndarray:
    """Physical stimulus ``I_se = gamma^{-1} e^{-gamma beta t} h``; ``t`` is a time column."""
    if model.gamma <= 0:
        raise ValueError("stimulus reconstruction needs gamma > 0")
    return np.exp(-model.gamma * model.beta * np.asarray(t)) * np.asarray(h) / model.gamma


def run_ladder(prob: ControlProblem, eps_list: Sequence[float]) -> list:
    """Solve for each penalty; rows hold ``eps_pen``, terminal norms and ``J``."""
    rows = []
    for eps in eps_list:
        rep = synthesize_null_control(replace(prob, eps_pen=float(eps)))
        p, q, th = rep.terminal_norms
        rows.append({"eps_pen": float(eps), "p_T": p, "q_T": q, "theta_T": th,
                     "J": rep.J_value, "cg_iterations": rep.cg_iterations,
                     "converged": rep.converged})
    return rows


def matched_static_interval(omega: MovingDomain, nt: int = 2001) -> tuple:
    """Centered interval whose length is the time-averaged measure of ``omega(t)``."""
    ts = np.linspace(0.0, omega.T, nt)
    lo, hi = omega.bounds(ts)
    meas = float(np.trapezoid(hi - lo, ts) / omega.T)
    c = 0.5 * omega.L
    return c - 0.5 * meas, c + 0.5 * meas


def fixed_vs_moving_comparison(prob: ControlProblem, fixed_interval,
                               eps_list: Sequence[float] = (1e-4, 1e-6, 1e-8)) -> dict:
    """Penalty ladders for the moving support of ``prob`` and a static interval."""
    lo, hi = fixed_interval
    if not 0.0 <= lo < hi <= prob.grid.L:
        raise ValueError("fixed interval must lie in [0, L]")
    static = MovingDomain.static(prob.grid.L, prob.grid.T, lo, hi)
    moving_rows = run_ladder(prob, eps_list)
    static_rows = run_ladder(prob.with_mask(static.mask(prob.grid)), eps_list)

    def reduction(rows, key):
        return rows[0][key] / max(rows[-1][key], 1e-300)

    return {
        "moving": moving_rows,
        "static": static_rows,
        "moving_reduction_q": reduction(moving_rows, "q_T"),
        "static_reduction_q": reduction(static_rows, "q_T"),
        "moving_reduction_p": reduction(moving_rows, "p_T"),
        "static_reduction_p": reduction(static_rows, "p_T"),
    }
