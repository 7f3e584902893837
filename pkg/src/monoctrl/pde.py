"""Time steppers for the monodomain system and its linearizations.

All schemes are Crank-Nicolson in time on the flux-form Neumann operator
from :mod:`monoctrl.grid`. The coupled linear systems are stepped by
eliminating the ODE unknown, so each step costs one tridiagonal solve.
The adjoint solver is the algebraic transpose of the theta-q stepper in the
discrete inner product, which makes the forward/backward duality exact up
to roundoff.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .grid import Grid, TriFactor
from .models import IonicModel, LinearizationCoeffs

NEWTON_TOL = 1e-10
NEWTON_MAXIT = 25
MAX_HALVINGS = 10


class ConvergenceError(RuntimeError):
    """Raised when the nonlinear stepper fails even after step halving."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics or {}


def _col(a: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Reshape a profile so it broadcasts against ``u`` with trailing batch axes."""
    return a.reshape(a.shape + (1,) * (u.ndim - a.ndim))


def _is_const_in_time(f: np.ndarray) -> bool:
    return bool(np.all(f == f[:1]))


# --------------------------------------------------------------------------
# nonlinear monodomain

@dataclass
class MonodomainSolution:
    v: np.ndarray
    w: np.ndarray
    grid: Grid
    info: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.v, self.w))


class _StepFailure(Exception):
    pass


def _newton_step(model, grid, v0, w0, f0, f1, s0, s1, dt):
    """One CN step of length ``dt``; returns ``(v1, w1, iterations)``."""
    g, beta = model.gamma, model.beta
    dl, d, du = grid.stiffness_bands
    denom = 1.0 + 0.5 * g * beta * dt
    bw = 0.5 * g * dt / denom
    w_base = (w0 * (1.0 - 0.5 * g * beta * dt) + 0.5 * g * dt * v0 + 0.5 * dt * (s0 + s1)) / denom

    rhs = v0 / dt - 0.5 * grid.apply_K0(v0) - 0.5 * model.current(v0, w0) + 0.5 * (f0 + f1)
    v = v0.copy()
    for it in range(1, NEWTON_MAXIT + 1):
        w = w_base + bw * v
        res = v / dt + 0.5 * grid.apply_K0(v) + 0.5 * model.current(v, w) - rhs
        Iv, Iw = model.current_jacobian(v, w)
        diag = 1.0 / dt + 0.5 * d + 0.5 * (Iv + Iw * bw)
        *_, delta, info = lapack.dgtsv(0.5 * dl, diag, 0.5 * du, -res)
        if info != 0 or not np.all(np.isfinite(delta)):
            raise _StepFailure("singular or non-finite Newton update")
        v = v + delta
        if np.max(np.abs(delta)) <= NEWTON_TOL * max(1.0, np.max(np.abs(v))):
            return v, w_base + bw * v, it
    raise _StepFailure(f"Newton did not converge in {NEWTON_MAXIT} iterations")


def _advance(model, grid, v0, w0, f0, f1, s0, s1, dt, depth, stats):
    try:
        v1, w1, it = _newton_step(model, grid, v0, w0, f0, f1, s0, s1, dt)
        stats["newton_total"] += it
        stats["newton_max"] = max(stats["newton_max"], it)
        return v1, w1
    except _StepFailure as exc:
        if depth >= MAX_HALVINGS:
            raise ConvergenceError(
                f"nonlinear step failed after {depth} halvings: {exc}",
                {"dt": dt, "max_abs_v": float(np.max(np.abs(v0))), **stats},
            ) from None
        stats["halvings"] += 1
        fm, sm = 0.5 * (f0 + f1), 0.5 * (s0 + s1)
        vm, wm = _advance(model, grid, v0, w0, f0, fm, s0, sm, 0.5 * dt, depth + 1, stats)
        return _advance(model, grid, vm, wm, fm, f1, sm, s1, 0.5 * dt, depth + 1, stats)


def solve_monodomain(model: IonicModel, grid: Grid, v0, w0, I_si=None, I_se=None,
                     w_source=None) -> MonodomainSolution:
    """Integrate ``v_t + I_ion(v, w) - (sigma v_x)_x = I_si + I_se``, ``w_t + g(v, w) = w_source``.

    ``w_source`` is zero in the physical model; it exists for manufactured
    solutions. Steps that fail in Newton are halved recursively with
    linearly interpolated sources.
    """
    v0 = grid.check_profile(v0, "v0")
    w0 = grid.check_profile(w0, "w0")
    f = grid.as_field(I_si, "I_si") + grid.as_field(I_se, "I_se")
    ws = grid.as_field(w_source, "w_source")
    v = grid.zeros()
    w = grid.zeros()
    v[0], w[0] = v0, w0
    stats = {"newton_total": 0, "newton_max": 0, "halvings": 0}
    for k in range(grid.m):
        v[k + 1], w[k + 1] = _advance(model, grid, v[k], w[k], f[k], f[k + 1],
                                      ws[k], ws[k + 1], grid.dt, 0, stats)
    info = {"scheme": "crank-nicolson/newton", "newton_tol": NEWTON_TOL,
            "newton_maxit": NEWTON_MAXIT, **stats}
    return MonodomainSolution(v, w, grid, info)


def smoothness_report(grid: Grid, v: np.ndarray) -> dict:
    """Discrete norms of a computed trajectory (boundedness in H1 and of v_t)."""
    vx = np.diff(v, axis=1) / grid.dx
    h1 = np.sqrt(np.sum(grid.mu * v**2, axis=1) + grid.dx * np.sum(vx**2, axis=1))
    vt = np.diff(v, axis=0) / grid.dt
    return {
        "Linf_H1": float(np.max(h1)),
        "Linf": float(np.max(np.abs(v))),
        "L2_vt": float(np.sqrt(grid.dt * np.sum(grid.mu * vt**2))),
    }


def solve_trajectory(model: IonicModel, grid: Grid, v0, w0, I_si=None) -> MonodomainSolution:
    """Uncontrolled reference trajectory with smoothness diagnostics in ``info``."""
    sol = solve_monodomain(model, grid, v0, w0, I_si=I_si)
    sol.info["smoothness"] = smoothness_report(grid, sol.v)
    return sol


# --------------------------------------------------------------------------
# linear coupled systems

class _CoupledStepper:
    """Factorizations of ``I + dt/2 (K0 + lp_k) + dt^2/4 c_k`` per time level."""

    def __init__(self, grid: Grid, lp, c):
        self.grid = grid
        self.lp = grid.as_field(lp, "lp")
        self.c = grid.as_field(c, "coupling")
        dt = grid.dt
        if _is_const_in_time(self.lp) and _is_const_in_time(self.c):
            fac = TriFactor(grid, 0.5 * dt, 0.5 * dt * self.lp[0] + 0.25 * dt**2 * self.c[0])
            self.fac = [fac] * (grid.m + 1)
        else:
            self.fac = [TriFactor(grid, 0.5 * dt, 0.5 * dt * self.lp[k] + 0.25 * dt**2 * self.c[k])
                        for k in range(grid.m + 1)]

    def K(self, k: int, u: np.ndarray) -> np.ndarray:
        return self.grid.apply_K0(u) + _col(self.lp[k], u) * u


@dataclass
class PQSolution:
    p: np.ndarray
    q: np.ndarray

    def __iter__(self):
        return iter((self.p, self.q))


class PQSystem(_CoupledStepper):
    """``p_t + K p + lq q = F``, ``q_t = p``."""

    def __init__(self, grid: Grid, lp, lq):
        super().__init__(grid, lp, lq)

    def forward(self, p0, q0, F) -> PQSolution:
        g, dt = self.grid, self.grid.dt
        lq = self.c
        p = np.zeros((g.m + 1,) + np.shape(p0))
        q = np.zeros_like(p)
        p[0], q[0] = p0, q0
        for k in range(g.m):
            pk, qk = p[k], q[k]
            rhs = (pk - 0.5 * dt * self.K(k, pk) - 0.5 * dt * _col(lq[k], qk) * qk
                   - 0.5 * dt * _col(lq[k + 1], qk) * (qk + 0.5 * dt * pk)
                   + 0.5 * dt * (F[k] + F[k + 1]))
            p[k + 1] = self.fac[k + 1].solve(rhs)
            q[k + 1] = qk + 0.5 * dt * (pk + p[k + 1])
        return PQSolution(p, q)


def _forcing(grid, G, h, mask):
    F = grid.as_field(G, "G")
    if h is not None:
        hh = grid.as_field(h, "h")
        F = F + (hh if mask is None else grid.check_field(mask, "mask") * hh)
    return F


def solve_linearized_pq(coeffs: LinearizationCoeffs, grid: Grid, p0, q0, G=None, h=None,
                        mask=None) -> PQSolution:
    """Linearized system in ``(p, q)`` with control ``h`` restricted by ``mask``."""
    sysm = PQSystem(grid, coeffs.lp, coeffs.lq)
    return sysm.forward(grid.check_profile(p0, "p0"), grid.check_profile(q0, "q0"),
                        _forcing(grid, G, h, mask))


@dataclass
class ThetaQSolution:
    theta: np.ndarray
    q: np.ndarray
    p: np.ndarray

    def __iter__(self):
        return iter((self.theta, self.q))


@dataclass
class AdjointSolution:
    phi: np.ndarray
    psi: np.ndarray
    source_density: np.ndarray
    phi0: np.ndarray
    psi0: np.ndarray

    def __iter__(self):
        return iter((self.phi, self.psi))


class ThetaQSystem(_CoupledStepper):
    """``theta_t + A q = F``, ``q_t + K q = theta`` and its exact discrete adjoint.

    Block form of one step: ``B_{k+1} X^{k+1} = C_k X^k + (dt/2 (F^k + F^{k+1}), 0)``
    with ``B = [[I, dt/2 A], [-dt/2, I + dt/2 K]]`` and
    ``C = [[I, -dt/2 A], [dt/2, I - dt/2 K]]``.
    """

    def __init__(self, grid: Grid, lp, A):
        super().__init__(grid, lp, A)

    @property
    def A(self):
        return self.c

    def theta_initial(self, p0, q0):
        return p0 + self.K(0, q0)

    def forward(self, theta0, q0, F) -> ThetaQSolution:
        g, dt, A = self.grid, self.grid.dt, self.c
        th = np.zeros((g.m + 1,) + np.shape(theta0))
        q = np.zeros_like(th)
        th[0], q[0] = theta0, q0
        for k in range(g.m):
            tk, qk = th[k], q[k]
            Fs = F[k] + F[k + 1]
            Aq = _col(A[k], qk) * qk
            rhs = qk - 0.5 * dt * self.K(k, qk) + dt * tk + 0.25 * dt**2 * Fs - 0.25 * dt**2 * Aq
            q[k + 1] = self.fac[k + 1].solve(rhs)
            th[k + 1] = tk + 0.5 * dt * Fs - 0.5 * dt * (_col(A[k + 1], qk) * q[k + 1] + Aq)
        p = th - np.stack([self.K(k, q[k]) for k in range(g.m + 1)])
        return ThetaQSolution(th, q, p)

    def _solve_Bstar(self, k, r1, r2):
        dt = self.grid.dt
        lq = self.fac[k].solve(r2 - 0.5 * dt * _col(self.c[k], r1) * r1)
        return r1 + 0.5 * dt * lq, lq

    def _apply_Cstar(self, k, l1, l2):
        dt = self.grid.dt
        return (l1 + 0.5 * dt * l2,
                -0.5 * dt * _col(self.c[k], l1) * l1 + l2 - 0.5 * dt * self.K(k, l2))

    def adjoint(self, phi_T, psi_T, R, S) -> AdjointSolution:
        """Transpose of :meth:`forward`.

        For any forward data the identity
        ``<X^m, Y_T> + <<X, Z>> = <X^0, Y^0> + <<F, g>>`` holds, where
        ``Z = (R, S)``, ``Y_T = (phi_T, psi_T)``, ``Y^0 = (phi0, psi0)`` and
        ``g`` is the returned source density; ``<<.,.>>`` is the
        trapezoid-in-time discrete inner product.
        """
        dt, m = self.grid.dt, self.grid.m
        lt = np.zeros((m + 1,) + np.shape(phi_T))
        lq = np.zeros_like(lt)
        lt[m], lq[m] = self._solve_Bstar(m, phi_T + 0.5 * dt * R[m], psi_T + 0.5 * dt * S[m])
        for k in range(m - 1, 0, -1):
            c1, c2 = self._apply_Cstar(k, lt[k + 1], lq[k + 1])
            lt[k], lq[k] = self._solve_Bstar(k, c1 + dt * R[k], c2 + dt * S[k])
        c1, c2 = self._apply_Cstar(0, lt[1], lq[1])
        phi0, psi0 = c1 + 0.5 * dt * R[0], c2 + 0.5 * dt * S[0]

        gsrc = np.empty_like(lt)
        gsrc[0] = lt[1]
        gsrc[1:m] = 0.5 * (lt[1:m] + lt[2:])
        gsrc[m] = lt[m]
        # nodal values Y^k = C_k^* Lambda^{k+1} + dt/2 Z^k (equal to B_k^* Lambda^k - dt/2 Z^k);
        # they obey a backward Crank-Nicolson recursion and match Y^0 and Y_T exactly
        phi = np.empty_like(lt)
        psi = np.empty_like(lq)
        for k in range(1, m):
            c1, c2 = self._apply_Cstar(k, lt[k + 1], lq[k + 1])
            phi[k], psi[k] = c1 + 0.5 * dt * R[k], c2 + 0.5 * dt * S[k]
        phi[0], psi[0] = phi0, psi0
        phi[m], psi[m] = phi_T, psi_T
        return AdjointSolution(phi, psi, gsrc, phi0, psi0)


def solve_theta_q(coeffs: LinearizationCoeffs, grid: Grid, theta0, q0, G=None, h=None,
                  mask=None, A=None) -> ThetaQSolution:
    """theta-q system; ``A`` defaults to ``coeffs.A``. ``p = theta - K q`` is returned too."""
    sysm = ThetaQSystem(grid, coeffs.lp, coeffs.A if A is None else A)
    return sysm.forward(grid.check_profile(theta0, "theta0"), grid.check_profile(q0, "q0"),
                        _forcing(grid, G, h, mask))


def theta_initial(coeffs: LinearizationCoeffs, grid: Grid, p0, q0) -> np.ndarray:
    """``theta0 = p0 - (sigma q0_x)_x + lp(., 0) q0`` with the discrete operator."""
    q0 = grid.check_profile(q0, "q0")
    return grid.check_profile(p0, "p0") + grid.apply_K0(q0) + coeffs.lp[0] * q0


def solve_adjoint(coeffs: LinearizationCoeffs, grid: Grid, phi_T, psi_T, R=None, S=None,
                  A=None) -> AdjointSolution:
    """Backward system ``-phi_t - psi = R``, ``-psi_t + K psi + A phi = S``."""
    sysm = ThetaQSystem(grid, coeffs.lp, coeffs.A if A is None else A)
    return sysm.adjoint(grid.check_profile(phi_T, "phi_T"), grid.check_profile(psi_T, "psi_T"),
                        grid.as_field(R, "R"), grid.as_field(S, "S"))


# --------------------------------------------------------------------------
# heat equation with memory

@dataclass
class MemorySolution:
    p: np.ndarray
    memory: np.ndarray

    def __iter__(self):
        return iter((self.p, self.memory))


def solve_heat_memory(grid: Grid, d, p0, h=None, mask=None) -> MemorySolution:
    """``p_t - (sigma p_x)_x + d p + int_0^t p ds = h 1_omega`` with ``p`` Neumann.

    The memory integral is accumulated by the trapezoidal rule and enters
    the Crank-Nicolson step implicitly.
    """
    dfield = grid.as_field(d, "d")
    F = _forcing(grid, None, h, mask)
    dt = grid.dt
    fac = _CoupledStepper(grid, dfield, 1.0)
    p = grid.zeros()
    mem = grid.zeros()
    p[0] = grid.check_profile(p0, "p0")
    for k in range(grid.m):
        pk, mk = p[k], mem[k]
        # m^{k+1} = m^k + dt/2 (p^k + p^{k+1}) substituted into the CN step
        rhs = (pk - 0.5 * dt * fac.K(k, pk) - dt * mk - 0.25 * dt**2 * pk
               + 0.5 * dt * (F[k] + F[k + 1]))
        p[k + 1] = fac.fac[k + 1].solve(rhs)
        mem[k + 1] = mk + 0.5 * dt * (pk + p[k + 1])
    return MemorySolution(p, mem)
