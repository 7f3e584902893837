"""Empirical checks of the weighted observability inequalities.

Each check draws random smooth samples, evaluates both sides of one
inequality on a ladder of grids and reports the ratios LHS/RHS. The
analytic constants are unknown, so the observable is the stability of the
largest ratio under grid refinement and reseeding.

Samples are truncated cosine series with coefficients drawn once per
sample; the same continuous sample is evaluated on every grid. Weighted
integrals are accumulated in log space (``logsumexp``) because
``exp(-2 s alpha)`` spans hundreds of decades.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.special import logsumexp

from .geometry import NestedSupports
from .grid import Grid, eval_sigma
from .pde import ThetaQSystem
from .weights import WeightSet

CHECKS = ("ode", "neumann", "coupled", "nonvanishing")
CHUNK = 25


@dataclass(frozen=True)
class CarlemanCheckConfig:
    which: str
    supports: NestedSupports
    weights: WeightSet
    samples: int = 100
    seed: int = 0
    grids: tuple = (64, 128, 256)
    modes: int = 8
    sigma: float = 1.0

    def __post_init__(self):
        if self.which not in CHECKS:
            raise ValueError(f"unknown check {self.which!r}; expected one of {CHECKS}")
        if self.samples < 10:
            raise ValueError("use at least 10 samples")
        if any(b <= a for a, b in zip(self.grids, self.grids[1:])):
            raise ValueError("grid ladder must be strictly increasing")

    def grid(self, n: int) -> Grid:
        dom = self.supports.omega0
        return Grid(dom.L, dom.T, n, n, self.sigma)


@dataclass
class RatioReport:
    which: str
    grids: tuple
    lhs: np.ndarray
    rhs: np.ndarray
    seed: int = 0

    @property
    def ratio(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.rhs > 0, self.lhs / self.rhs, np.where(self.lhs > 0, np.inf, 0.0))

    @property
    def max_ratio(self) -> np.ndarray:
        return np.max(self.ratio, axis=1)

    @property
    def stability(self) -> float:
        """Largest over smallest per-grid maximum ratio (1 means perfectly stable)."""
        mr = self.max_ratio
        return float(np.max(mr) / np.min(mr))

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.lhs)) and np.all(np.isfinite(self.rhs)))


# --------------------------------------------------------------------------
# samples and quadrature

@dataclass(frozen=True)
class CosineSample:
    """``sum a_jk cos(j pi x / L) cos(k pi t / T)`` with ``(1+j)^-2 (1+k)^-2`` decay."""

    coef: np.ndarray  # (samples, J, K)
    L: float
    T: float

    @classmethod
    def draw(cls, rng_list, J, K, L, T) -> "CosineSample":
        j = np.arange(J)[:, None]
        k = np.arange(K)[None, :]
        decay = (1.0 + j) ** -2.0 * (1.0 + k) ** -2.0
        coef = np.stack([rng.standard_normal((J, K)) * decay for rng in rng_list])
        return cls(coef, L, T)

    def _basis(self, x, t, dx=0, dt=0):
        J, K = self.coef.shape[1:]
        kx = np.arange(J) * np.pi / self.L
        kt = np.arange(K) * np.pi / self.T
        bx = _cos_deriv(np.outer(x, kx), kx, dx)  # (nx, J)
        bt = _cos_deriv(np.outer(t, kt), kt, dt)  # (nt, K)
        return bx, bt

    def field(self, x, t, dx=0, dt=0) -> np.ndarray:
        """Values on the tensor grid, shape ``(nt, nx, samples)``."""
        bx, bt = self._basis(x, t, dx, dt)
        return np.einsum("tk,xj,sjk->txs", bt, bx, self.coef)

    def profile(self, x, dx=0) -> np.ndarray:
        """Time-independent part (k = 0 column), shape ``(nx, samples)``."""
        J = self.coef.shape[1]
        kx = np.arange(J) * np.pi / self.L
        return _cos_deriv(np.outer(x, kx), kx, dx) @ self.coef[:, :, 0].T


def _cos_deriv(arg, k, order):
    # derivatives of cos cycle through -sin, -cos, sin
    shift = [np.cos, lambda a: -np.sin(a), lambda a: -np.cos(a), np.sin][order % 4]
    return shift(arg) * k**order


def _sub_rngs(seed: int, n: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def log_integral(grid: Grid, log_weight: np.ndarray, f2: np.ndarray, mask=None) -> np.ndarray:
    """``log int int f2 * exp(log_weight)`` (trapezoid) for each trailing sample."""
    lq = np.log(grid.weights)[..., None] + log_weight[..., None]
    if mask is not None:
        lq = np.where(mask[..., None] > 0, lq, -np.inf)
    lq = np.broadcast_to(lq, f2.shape).reshape(-1, f2.shape[-1])
    return logsumexp(lq, axis=0, b=f2.reshape(-1, f2.shape[-1]))


def log_boundary_integral(grid: Grid, log_weight: np.ndarray, f2: np.ndarray, j: int) -> np.ndarray:
    """``log int_0^T f2(x_j, t) exp(log_weight(x_j, t)) dt``."""
    lq = np.log(grid.wt)[:, None] + log_weight[:, j, None]
    return logsumexp(np.broadcast_to(lq, f2[:, j].shape), axis=0, b=f2[:, j])


def _interior_log_fields(ws: WeightSet, grid: Grid, bar: bool = False) -> dict:
    """Log weights on all nodes; rows ``t = 0`` and ``t = T`` get ``-inf``
    (the weights ``exp(-2 s alpha)`` vanish there)."""
    ws = replace(ws, t_cap=np.inf)
    s = ws.params.s
    tt, xx = np.meshgrid(grid.t[1:-1], grid.x, indexing="ij")
    if bar:
        a, xi = ws.alpha_bar_xi_bar(xx, tt)
    else:
        a, xi = ws.alpha_xi(xx, tt)
    full = lambda f, edge: np.concatenate([np.full((1, grid.n + 1), edge), f,
                                           np.full((1, grid.n + 1), edge)])
    out = {"log_e": full(-2.0 * s * a, -np.inf), "log_xi": full(np.log(xi), 0.0)}
    if bar:
        # the rho weights are finite at t = 0 and vanish (inverted) at T
        lr = ws.log_rho(grid.t[:-1])
        out["log_rho"] = np.concatenate([lr, np.full((4, 1), np.inf)], axis=1)
        ab0, xb0 = ws.alpha_bar_xi_bar(grid.x, np.zeros_like(grid.x))
        out["log_e"][0] = -2.0 * s * ab0
        out["log_xi"][0] = np.log(xb0)
    return out


def _dt(u, grid):
    return np.gradient(u, grid.dt, axis=0, edge_order=2)


def _dx(u, grid):
    return np.gradient(u, grid.dx, axis=1, edge_order=2)


def _flux_div(u, grid):
    """``(sigma u_x)_x`` on every level, via the Neumann operator."""
    return -np.stack([grid.apply_K0(u[k]) for k in range(u.shape[0])])


# --------------------------------------------------------------------------
# individual checks

def ode_sides(ws: WeightSet, supports: NestedSupports, grid: Grid, phi, phi_t):
    """Log LHS and log RHS of the ODE inequality for fields ``(nt, nx, samples)``."""
    lam, s = ws.params.lam, ws.params.s
    f = _interior_log_fields(ws, grid)
    m1 = supports.omega1.mask(grid)
    le, lx = f["log_e"], f["log_xi"]
    lhs = np.log(s * lam**2) + log_integral(grid, le + lx, phi**2)
    rhs = np.logaddexp(log_integral(grid, le, phi_t**2),
                       np.log(s**2 * lam**2) + log_integral(grid, le + 2 * lx, phi**2, m1))
    return lhs, rhs


def _ode_terms(cfg, grid, smp):
    return ode_sides(cfg.weights, cfg.supports, grid,
                     smp.field(grid.x, grid.t), smp.field(grid.x, grid.t, dt=1))


def _neumann_blocks(ws, grid, psi, f_src, le, lx, obs_mask):
    """Log of the five LHS blocks and two RHS blocks of the Neumann inequality."""
    lam, s = ws.params.lam, ws.params.s
    pxx = _flux_div(psi, grid)
    pt = _dt(psi, grid)
    px = _dx(psi, grid)
    lhs = [
        -np.log(s) + log_integral(grid, le - lx, pxx**2 + pt**2),
        np.log(s * lam**2) + log_integral(grid, le + lx, px**2),
        np.log(s**3 * lam**4) + log_integral(grid, le + 3 * lx, psi**2),
        np.log(s**3 * lam**3) + log_boundary_integral(grid, le + 3 * lx, psi**2, grid.n),
        np.log(s**3 * lam**3) + log_boundary_integral(grid, le + 3 * lx, psi**2, 0),
    ]
    rhs = [
        log_integral(grid, le, f_src**2),
        np.log(s**3 * lam**4) + log_integral(grid, le + 3 * lx, psi**2, obs_mask),
    ]
    return lhs, rhs


def _neumann_terms(cfg, grid, smp_T, smp_f):
    f = _interior_log_fields(cfg.weights, grid)
    psiT = smp_T.profile(grid.x)
    src = smp_f.field(grid.x, grid.t)
    sysm = ThetaQSystem(grid, 0.0, 0.0)
    ad = sysm.adjoint(np.zeros_like(psiT), psiT, np.zeros_like(src), src)
    lhs, rhs = _neumann_blocks(cfg.weights, grid, ad.psi, src, f["log_e"], f["log_xi"],
                               cfg.supports.omega1.mask(grid))
    return logsumexp(np.stack(lhs), axis=0), logsumexp(np.stack(rhs), axis=0)


def _coupled_terms(cfg, grid, smps, coeffs_for, bar):
    lam, s = cfg.weights.params.lam, cfg.weights.params.s
    lp, A = coeffs_for(grid)
    sp_phiT, sp_psiT, sp_R, sp_S = smps
    phiT, psiT = sp_phiT.profile(grid.x), sp_psiT.profile(grid.x)
    R, S = sp_R.field(grid.x, grid.t), sp_S.field(grid.x, grid.t)
    ad = ThetaQSystem(grid, lp, A).adjoint(phiT, psiT, R, S)
    phi, psi = ad.phi, ad.psi
    f = _interior_log_fields(cfg.weights, grid, bar=bar)
    le, lx = f["log_e"], f["log_xi"]
    pxx, pt, px = _flux_div(psi, grid), _dt(psi, grid), _dx(psi, grid)
    om = cfg.supports.omega.mask(grid)
    if not bar:
        lhs = [
            -np.log(s) + log_integral(grid, le - lx, pxx**2 + pt**2),
            np.log(s * lam**2) + log_integral(grid, le + lx, px**2),
            np.log(s**3 * lam**4) + log_integral(grid, le + 3 * lx, psi**2),
            np.log(s * lam**2) + log_integral(grid, le + lx, phi**2),
        ]
        rhs = [
            np.log(s**3 * lam**4) + log_integral(grid, le + 3 * lx, R**2),
            log_integral(grid, le, S**2),
            np.log(s**7 * lam**6) + log_integral(grid, le + 7 * lx, phi**2, om),
        ]
    else:
        lr = f["log_rho"][:, :, None] * np.ones((1, 1, grid.n + 1))
        lhs = [
            log_integral(grid, le - lx, pxx**2 + pt**2),
            log_integral(grid, le + lx, px**2),
            log_integral(grid, le + 3 * lx, psi**2),
            log_integral(grid, le + lx, phi**2),
            np.log(np.sum(grid.mu[:, None] * (phi[0] ** 2 + psi[0] ** 2), axis=0)),
        ]
        rhs = [
            log_integral(grid, -2 * lr[0], R**2),
            log_integral(grid, -2 * lr[1], S**2),
            log_integral(grid, -2 * lr[2], phi**2, om),
        ]
    return logsumexp(np.stack(lhs), axis=0), logsumexp(np.stack(rhs), axis=0)


def _rest_coeffs(grid):
    return 0.0, 0.0


def _run(cfg: CarlemanCheckConfig, coeffs_for: Optional[Callable] = None,
         terminal_only: bool = False) -> RatioReport:
    rngs = _sub_rngs(cfg.seed, cfg.samples)
    dom = cfg.supports.omega0
    J = K = cfg.modes
    lhs = np.zeros((len(cfg.grids), cfg.samples))
    rhs = np.zeros_like(lhs)
    n_fields = {"ode": 1, "neumann": 2, "coupled": 4, "nonvanishing": 4}[cfg.which]
    # one independent sub-stream per sample and field
    streams = [[np.random.default_rng(r.integers(2**63)) for _ in range(n_fields)] for r in rngs]
    smps = [CosineSample.draw([st[i] for st in streams], J, K, dom.L, dom.T)
            for i in range(n_fields)]
    if terminal_only and cfg.which in ("coupled", "nonvanishing"):
        smps[2] = replace(smps[2], coef=0.0 * smps[2].coef)
        smps[3] = replace(smps[3], coef=0.0 * smps[3].coef)
    coeffs_for = coeffs_for or _rest_coeffs
    for gi, n in enumerate(cfg.grids):
        grid = cfg.grid(n)
        for lo in range(0, cfg.samples, CHUNK):
            sl = slice(lo, min(lo + CHUNK, cfg.samples))
            part = [replace(sm, coef=sm.coef[sl]) for sm in smps]
            if cfg.which == "ode":
                a, b = _ode_terms(cfg, grid, part[0])
            elif cfg.which == "neumann":
                a, b = _neumann_terms(cfg, grid, part[0], part[1])
            else:
                a, b = _coupled_terms(cfg, grid, part, coeffs_for, cfg.which == "nonvanishing")
            lhs[gi, sl], rhs[gi, sl] = np.exp(a), np.exp(b)
    return RatioReport(cfg.which, tuple(cfg.grids), lhs, rhs, cfg.seed)


def check_ode_carleman(cfg: CarlemanCheckConfig) -> RatioReport:
    return _run(replace(cfg, which="ode"))


def _gram(grid, log_weight, B, shift, mask=None):
    w = grid.weights * np.exp(log_weight - shift)
    if mask is not None:
        w = w * mask
    return np.einsum("tx,txa,txb->ab", w, B, B, optimize=True)


def ode_span_supremum(cfg: CarlemanCheckConfig) -> np.ndarray:
    """Exact sup of the ODE ratio over the span of the sampled cosine modes, per grid.

    Both sides are quadratic forms in the coefficients, so the supremum is
    the top generalized eigenvalue. It is seed-free, unlike the sampled max.
    """
    ws, dom = cfg.weights, cfg.supports.omega0
    lam, s = ws.params.lam, ws.params.s
    J = K = cfg.modes
    eye = np.eye(J * K).reshape(J * K, J, K)
    basis = CosineSample(eye, dom.L, dom.T)
    out = []
    for n in cfg.grids:
        grid = cfg.grid(n)
        f = _interior_log_fields(ws, grid)
        le, lx = f["log_e"], f["log_xi"]
        B, Bt = basis.field(grid.x, grid.t), basis.field(grid.x, grid.t, dt=1)
        m1 = cfg.supports.omega1.mask(grid)
        shift = np.max(le[np.isfinite(le)] + 2 * np.maximum(lx[np.isfinite(le)], 0.0))
        ML = s * lam**2 * _gram(grid, le + lx, B, shift)
        MR = _gram(grid, le, Bt, shift) + s**2 * lam**2 * _gram(grid, le + 2 * lx, B, shift, m1)
        out.append(float(eigh(ML, MR, eigvals_only=True)[-1]))
    return np.array(out)


def check_neumann_carleman(cfg: CarlemanCheckConfig) -> RatioReport:
    return _run(replace(cfg, which="neumann"))


def check_coupled_carleman(cfg: CarlemanCheckConfig, coeffs_for: Optional[Callable] = None,
                           terminal_only: bool = False) -> RatioReport:
    """Coupled adjoint inequality; ``cfg.which == "nonvanishing"`` selects the rho-weighted form.

    ``coeffs_for(grid) -> (lp, A)`` supplies the linearization on each grid
    (the resting state by default).
    """
    which = cfg.which if cfg.which in ("coupled", "nonvanishing") else "coupled"
    return _run(replace(cfg, which=which), coeffs_for, terminal_only)


def run_check(cfg: CarlemanCheckConfig, coeffs_for=None) -> RatioReport:
    return {"ode": check_ode_carleman, "neumann": check_neumann_carleman}.get(
        cfg.which, lambda c: check_coupled_carleman(c, coeffs_for))(cfg)


def seed_stability(cfg: CarlemanCheckConfig, seeds: Sequence[int], coeffs_for=None) -> dict:
    """Max ratios for each seed and grid, and the overall max/min factor."""
    table = np.array([run_check(replace(cfg, seed=int(sd)), coeffs_for).max_ratio for sd in seeds])
    return {"seeds": list(seeds), "max_ratio": table,
            "factor": float(np.max(table) / np.min(table))}


# --------------------------------------------------------------------------
# conjugation identity

@dataclass
class ConjugationReport:
    grids: tuple
    residual: np.ndarray
    boundary_residual: np.ndarray

    @property
    def orders(self) -> np.ndarray:
        return np.log2(self.residual[:-1] / self.residual[1:])


def conjugation_residual(ws: WeightSet, grid: Grid, amplitude: float = 1.0):
    """Relative residual of ``e^{-s a} P(e^{s a} w) = P_e w + P_k w`` with ``P = d_t + d_x(sigma d_x)``.

    ``w = e^{-s alpha} cos(pi x / L) sin(pi t / T)^2``; the left side applies the
    discrete operator to the smooth ``e^{s alpha} w``, the right side uses
    finite differences of ``w`` and closed-form ``alpha`` derivatives.
    Also returns the residual of ``w_x = -s alpha_x w`` at ``x = 0, L``.
    """
    ws = replace(ws, t_cap=np.inf)
    s = ws.params.s
    L, T = grid.L, grid.T
    t = grid.t[1:-1]
    tt, xx = np.meshgrid(t, grid.x, indexing="ij")
    d = ws.derivatives(xx, tt)
    psi = amplitude * np.cos(np.pi * xx / L) * np.sin(np.pi * tt / T) ** 2
    psi_full = amplitude * np.cos(np.pi * grid.XT[0] / L) * np.sin(np.pi * grid.XT[1] / T) ** 2
    ea = np.exp(-s * d["alpha"])
    w = ea * psi

    # left: apply P to psi on the full grid (psi is smooth through t = 0, T)
    Ppsi = _dt(psi_full, grid) + _flux_div(psi_full, grid)
    lhs = ea * Ppsi[1:-1]

    sig = eval_sigma(grid.sigma, xx)
    hh = 1e-6 * L
    dsig = (eval_sigma(grid.sigma, xx + hh) - eval_sigma(grid.sigma, xx - hh)) / (2 * hh)
    # w on the full grid with zero rows at t = 0, T (their exact limits)
    wf = np.zeros(grid.shape)
    wf[1:-1] = w
    if amplitude == 0.0:
        wt = wx = wflux = np.zeros_like(w)
    else:
        wt = _dt(wf, grid)[1:-1]
        wx = _dx(w, grid)
        wflux = _flux_div(wf, grid)[1:-1]
    # the Neumann operator needs w_x = 0 at the ends; w has w_x = -s alpha_x w there,
    # so only interior columns are compared
    ax, axx = d["alpha_x"], d["alpha_xx"]
    Pe = wflux + (s * d["alpha_t"] + s**2 * sig * ax**2) * w
    Pk = wt + 2 * s * sig * ax * wx + s * (dsig * ax + sig * axx) * w
    res = lhs[:, 1:-1] - (Pe + Pk)[:, 1:-1]
    scale = np.max(np.abs(lhs[:, 1:-1]))
    rel = float(np.max(np.abs(res)) / scale) if scale > 0 else float(np.max(np.abs(res)))
    bres = np.abs(wx[:, [0, -1]] + s * ax[:, [0, -1]] * w[:, [0, -1]])
    bscale = np.max(np.abs(s * ax[:, [0, -1]] * w[:, [0, -1]]))
    brel = float(np.max(bres) / bscale) if bscale > 0 else float(np.max(bres))
    return rel, brel


def check_conjugation_identity(cfg: CarlemanCheckConfig, amplitude: float = 1.0) -> ConjugationReport:
    res, bres = zip(*(conjugation_residual(cfg.weights, cfg.grid(n), amplitude) for n in cfg.grids))
    return ConjugationReport(tuple(cfg.grids), np.array(res), np.array(bres))


# --------------------------------------------------------------------------
# manufactured-solution oracle for the Neumann blocks

NEUMANN_BLOCKS = ("psi_xx_t", "psi_x", "psi", "boundary_L", "boundary_0", "source", "observation")


def _mms_psi(x, t, L, T):
    """Smooth Neumann field with its derivatives: psi, psi_t, psi_x, psi_xx."""
    cx, sx = np.cos(np.pi * x / L), np.sin(np.pi * x / L)
    g = 2.0 + np.cos(np.pi * t / T)
    gt = -np.pi / T * np.sin(np.pi * t / T)
    k = np.pi / L
    return cx * g, cx * gt, -k * sx * g, -k**2 * cx * g


def neumann_blocks_numeric(ws: WeightSet, supports: NestedSupports, grid: Grid) -> np.ndarray:
    """The seven Neumann-inequality integrals for the manufactured field, from the solver.

    The source ``f = -psi_t - psi_xx`` is built from closed forms; ``psi`` itself
    comes from the backward solve, derivatives from finite differences.
    """
    if not np.isscalar(grid.sigma) or grid.sigma != 1.0:
        raise ValueError("manufactured Neumann oracle assumes sigma = 1")
    xx, tt = grid.XT
    psi_ex, pt, _, pxx = _mms_psi(xx, tt, grid.L, grid.T)
    f = -pt - pxx
    ad = ThetaQSystem(grid, 0.0, 0.0).adjoint(np.zeros(grid.n + 1), psi_ex[-1], np.zeros(grid.shape), f)
    fl = _interior_log_fields(ws, grid)
    lhs, rhs = _neumann_blocks(ws, grid, ad.psi[..., None], f[..., None],
                                   fl["log_e"], fl["log_xi"], supports.omega1.mask(grid))
    return np.array([b[0] for b in lhs + rhs])


def neumann_blocks_quadrature(ws: WeightSet, supports: NestedSupports, nodes: int = 160) -> np.ndarray:
    """The same seven integrals (log values) by composite Gauss-Legendre on closed forms.

    Time is split at the kinks of the bridging profile; the observation block
    integrates over ``omega1(t)`` exactly at each time node.
    """
    ws = replace(ws, t_cap=np.inf)
    dom = supports.omega0
    L, T, tau = dom.L, dom.T, ws.params.tau
    s, lam = ws.params.s, ws.params.lam
    gx, gw = np.polynomial.legendre.leggauss(nodes)

    def rule(a, b):
        return 0.5 * (b - a) * gx + 0.5 * (a + b), 0.5 * (b - a) * gw

    t_pts, t_w = zip(*(rule(a, b) for a, b in ((0.0, tau), (tau, T - tau), (T - tau, T))))
    t_nodes, t_wts = np.concatenate(t_pts), np.concatenate(t_w)
    x_nodes, x_wts = rule(0.0, L)

    tt, xx = np.meshgrid(t_nodes, x_nodes, indexing="ij")
    a, xi = ws.alpha_xi(xx, tt)
    le, lx = -2.0 * s * a, np.log(xi)
    psi, pt, px, pxx = _mms_psi(xx, tt, L, T)
    f = -pt - pxx
    lw = np.log(np.outer(t_wts, x_wts))

    def lint(logw, f2):
        return float(logsumexp(lw + logw, b=f2))

    # observation block: integrate over omega1(t) exactly per time node
    obs = []
    lo, hi = supports.omega1.bounds(t_nodes)
    for k, tk in enumerate(t_nodes):
        a_, b_ = max(lo[k], 0.0), min(hi[k], L)
        xs, xw = rule(a_, b_)
        ak, xik = ws.alpha_xi(xs, np.full_like(xs, tk))
        ps = _mms_psi(xs, tk, L, T)[0]
        obs.append(np.log(t_wts[k] * xw) - 2 * s * ak + 3 * np.log(xik) + np.log(ps**2 + 1e-300))
    obs_val = float(logsumexp(np.concatenate(obs)))

    def bdry(xb):
        ab, xib = ws.alpha_xi(np.full_like(t_nodes, xb), t_nodes)
        pb = _mms_psi(xb, t_nodes, L, T)[0]
        return float(logsumexp(np.log(t_wts) - 2 * s * ab + 3 * np.log(xib), b=pb**2))

    return np.array([
        -np.log(s) + lint(le - lx, pxx**2 + pt**2),
        np.log(s * lam**2) + lint(le + lx, px**2),
        np.log(s**3 * lam**4) + lint(le + 3 * lx, psi**2),
        np.log(s**3 * lam**3) + bdry(L),
        np.log(s**3 * lam**3) + bdry(0.0),
        lint(le, f**2),
        np.log(s**3 * lam**4) + obs_val,
    ])
