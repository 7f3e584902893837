"""Steering the nonlinear monodomain system onto a reference trajectory.

The perturbation ``(y, z) = (v - vbar, w - wbar)`` is mapped to ``(p, q)``;
the nonlinear remainder is treated as a source ``G = -N(p, q)`` that is
frozen at the previous iterate, and each iterate applies the linear null
control for the current source (a Picard iteration on ``G``). The result is
always checked by re-running the nonlinear solver in the original variables
with the reconstructed stimulus.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .control import ControlProblem, PreconditionError, reconstruct_stimulation, synthesize_null_control
from .geometry import MovingDomain
from .grid import Grid, eval_sigma
from .models import IonicModel, change_variables_forward, linearize, nonlinearity
from .pde import ConvergenceError, solve_linearized_pq, solve_monodomain
from .weights import WeightSet

PICARD_TOL = 1e-6


@dataclass
class SteeringProblem:
    model: IonicModel
    grid: Grid
    vbar: np.ndarray
    wbar: np.ndarray
    v0: np.ndarray
    w0: np.ndarray
    omega: MovingDomain
    weights: Optional[WeightSet] = None
    I_si: Optional[np.ndarray] = None
    tol_terminal: Optional[float] = None
    max_outer: int = 10
    eps_pen: float = 1e-8

    def __post_init__(self):
        g = self.grid
        self.vbar = g.check_field(self.vbar, "vbar")
        self.wbar = g.check_field(self.wbar, "wbar")
        self.v0 = g.check_profile(self.v0, "v0")
        self.w0 = g.check_profile(self.w0, "w0")
        if not np.all(np.isfinite(self.v0)) or not np.all(np.isfinite(self.w0)):
            raise PreconditionError("perturbed initial data must be finite")

    def perturbed(self, v0, w0=None) -> "SteeringProblem":
        return replace(self, v0=v0, w0=self.w0 if w0 is None else w0)


@dataclass
class SteeringReport:
    I_se: np.ndarray
    outer_iterations: int
    terminal_error: float
    converged: bool
    G_trace: list = field(default_factory=list)
    change_trace: list = field(default_factory=list)
    tol_terminal: float = 0.0
    status: str = ""
    h: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    w: Optional[np.ndarray] = None

    def summary(self) -> str:
        lines = [
            f"converged = {self.converged}",
            f"status = {self.status}",
            f"outer_iterations = {self.outer_iterations}",
            f"terminal_error = {self.terminal_error!r}",
            f"tol_terminal = {self.tol_terminal!r}",
        ]
        lines += [f"G_norm[{k}] = {v!r}" for k, v in enumerate(self.G_trace)]
        lines += [f"relative_change[{k}] = {v!r}" for k, v in enumerate(self.change_trace)]
        return "\n".join(lines)


def manufactured_error(model: IonicModel, grid: Grid) -> float:
    """Relative L2 error of the nonlinear stepper on a manufactured solution at ``grid``."""
    X, T = grid.XT
    L = grid.L
    v = np.cos(np.pi * X / L) * np.exp(-T)
    w = np.exp(-T)
    vx = -np.pi / L * np.sin(np.pi * X / L) * np.exp(-T)
    h = 1e-6 * L
    sig = lambda x: eval_sigma(grid.sigma, x)
    dsig = (sig(X + h) - sig(X - h)) / (2 * h)
    f = -v + model.current(v, w) - (dsig * vx + sig(X) * (-(np.pi / L) ** 2 * v))
    ws = -w + model.recovery(v, w)
    sol = solve_monodomain(model, grid, v[0], w[0] * np.ones(grid.n + 1), I_si=f, w_source=ws)
    err = np.hypot(grid.norm(sol.v - v), grid.norm(sol.w - w))
    return float(err / np.hypot(grid.norm(v), grid.norm(w * np.ones_like(X))))


def _terminal_error(grid, v, w, vbar, wbar) -> float:
    return float(np.hypot(grid.space_norm(v[-1] - vbar[-1]), grid.space_norm(w[-1] - wbar[-1])))


def steer_to_trajectory(sp: SteeringProblem) -> SteeringReport:
    """Picard iteration on the nonlinear source, then an end-to-end check."""
    g, m = sp.grid, sp.model
    tcol = g.t[:, None]
    y0 = sp.v0 - sp.vbar[0]
    z0 = sp.w0 - sp.wbar[0]
    p0, q0 = change_variables_forward(y0, z0, 0.0, m)
    coeffs = linearize(m, sp.vbar, sp.wbar, g)
    mask = sp.omega.mask(g)

    size0 = np.hypot(g.space_norm(y0), g.space_norm(z0))
    tol = sp.tol_terminal
    if tol is None:
        tol = 10.0 * manufactured_error(m, g) * size0

    G = g.zeros()
    G_trace, changes = [], []
    p = q = None
    h = g.zeros()
    status = "max_outer reached"
    picard_ok = False
    first_norm = None
    it = 0
    for it in range(1, sp.max_outer + 1):
        prob = ControlProblem.from_pq(coeffs, g, sp.omega, p0, q0, G, sp.weights, sp.eps_pen)
        try:
            rep = synthesize_null_control(prob)
        except PreconditionError as exc:
            status = f"admissibility failure: {exc}"
            break
        h = rep.h
        sol = solve_linearized_pq(coeffs, g, p0, q0, G, h, mask)
        nrm = np.hypot(g.norm(sol.p), g.norm(sol.q))
        if not np.isfinite(nrm):
            status = "diverged: non-finite iterate"
            break
        if first_norm is None:
            first_norm = nrm
        if first_norm > 0 and nrm > 10.0 * first_norm:
            status = f"diverged: iterate norm grew {nrm / first_norm:.3g}x"
            break
        if p is None:
            change = 0.0 if nrm == 0.0 else np.inf
        else:
            prev = np.hypot(g.norm(p), g.norm(q))
            diff = np.hypot(g.norm(sol.p - p), g.norm(sol.q - q))
            change = 0.0 if prev == 0.0 and diff == 0.0 else diff / max(prev, 1e-300)
        changes.append(float(change))
        p, q = sol.p, sol.q
        with np.errstate(over="ignore", invalid="ignore"):
            G = -nonlinearity(m, sp.vbar, p, q, tcol)
        G_trace.append(g.norm(G))
        if change <= PICARD_TOL:
            status = "picard converged"
            picard_ok = True
            break

    I_se = reconstruct_stimulation(h, m, tcol)
    v = w = None
    err = np.inf
    if np.all(np.isfinite(I_se)):
        try:
            ver = solve_monodomain(m, g, sp.v0, sp.w0, I_si=sp.I_si, I_se=I_se)
            v, w = ver.v, ver.w
            err = _terminal_error(g, v, w, sp.vbar, sp.wbar)
        except ConvergenceError as exc:
            status += f"; verification failed: {exc}"
    converged = picard_ok and err <= tol
    return SteeringReport(I_se, it, err, bool(converged), G_trace, changes, float(tol),
                          status, h, v, w)


def _basin_row(args):
    sp, delta = args
    pert = sp.perturbed(sp.vbar[0] + delta * np.cos(np.pi * sp.grid.x / sp.grid.L), sp.wbar[0])
    rep = steer_to_trajectory(pert)
    return {"delta": float(delta), "converged": rep.converged,
            "terminal_error": rep.terminal_error, "outer_iterations": rep.outer_iterations,
            "status": rep.status}


def basin_sweep(sp: SteeringProblem, deltas: Sequence[float], workers: int = 1) -> list:
    """Steer from ``vbar0 + delta cos(pi x / L)`` for each delta (ascending)."""
    deltas = [float(d) for d in deltas]
    if deltas != sorted(deltas):
        raise ValueError("delta list must be sorted ascending")
    jobs = [(sp, d) for d in deltas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_basin_row, jobs))
    return [_basin_row(j) for j in jobs]
