"""FitzHugh-Nagumo and Rogers-McCulloch ionic models.

Besides the pointwise current and recovery terms this module holds the
linearization around a trajectory, the transformed nonlinearity acting on
``(p, q)`` and the changes of variables ``(v, w) <-> (y, z) <-> (p, q)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FHN = "fhn"
RM = "rm"


@dataclass(frozen=True)
class IonicModel:
    """Membrane parameters; defaults are desk-scale values, not physiological ones."""

    kind: str = RM
    a: float = 0.13
    b: float = 1.0
    c: float = 1.0
    gamma: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.kind not in (FHN, RM):
            raise ValueError(f"unknown model kind {self.kind!r}; expected 'fhn' or 'rm'")
        for name in ("a", "b", "c", "gamma", "beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"model parameter {name} must be nonnegative")

    def current(self, v, w):
        return ionic_current(self, v, w)

    def current_jacobian(self, v, w):
        """``(dI/dv, dI/dw)`` of the ionic current."""
        a, b, c = self.a, self.b, self.c
        dv = b * (a - 2.0 * (1.0 + a) * v + 3.0 * v**2)
        if self.kind == RM:
            return dv + c * w, c * v
        return dv, c * np.ones_like(np.asarray(v, dtype=float))

    def recovery(self, v, w):
        return recovery_rhs(self, v, w)


def ionic_current(m: IonicModel, v, w):
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    cubic = m.b * v * (m.a - v) * (1.0 - v)
    if m.kind == RM:
        return cubic + m.c * v * w
    return cubic + m.c * w


def recovery_rhs(m: IonicModel, v, w):
    """``g(v, w)``; the gating variable obeys ``w_t + g(v, w) = 0``."""
    return -m.gamma * (np.asarray(v, dtype=float) - m.beta * np.asarray(w, dtype=float))


@dataclass
class LinearizationCoeffs:
    ly: np.ndarray
    lp: np.ndarray
    lq: np.ndarray
    A: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def _w1inf(f: np.ndarray, dx: float, dt: float) -> float:
    fx = np.gradient(f, dx, axis=1, edge_order=2)
    ft = np.gradient(f, dt, axis=0, edge_order=2)
    return float(np.max(np.abs(f)) + np.max(np.abs(fx)) + np.max(np.abs(ft)))


def linearize(m: IonicModel, vbar, wbar, grid) -> LinearizationCoeffs:
    """Coefficients of the linear terms around the trajectory ``(vbar, wbar)``.

    The FHN branch is derived from the model itself: the ``c w`` term is
    linear, so it only contributes ``gamma*c`` to the ``q`` coefficient.
    """
    vbar = grid.check_field(vbar, "vbar")
    wbar = grid.check_field(wbar, "wbar")
    a, b, c, g, beta = m.a, m.b, m.c, m.gamma, m.beta
    ly = 3.0 * b * vbar**2 - 2.0 * b * (1.0 + a) * vbar
    if m.kind == RM:
        ly = ly + c * wbar
        lq = g * c * vbar
    else:
        lq = np.full(grid.shape, g * c)
    lp = ly - g * beta + a * b
    if np.all(lp == lp[:1]):
        dlp = np.zeros_like(lp)  # keep A exact for time-independent coefficients
    else:
        dlp = np.gradient(lp, grid.dt, axis=0, edge_order=2)
    A = lq - dlp
    diag = {
        "W1inf_lp": _w1inf(lp, grid.dx, grid.dt),
        "W1inf_lq": _w1inf(lq, grid.dx, grid.dt),
        "max_abs_A": float(np.max(np.abs(A))),
    }
    return LinearizationCoeffs(ly=ly, lp=lp, lq=lq, A=A, diagnostics=diag)


def constant_coeffs(m: IonicModel, grid, vstar: float = 0.0, wstar: float = 0.0) -> LinearizationCoeffs:
    return linearize(m, np.full(grid.shape, vstar), np.full(grid.shape, wstar), grid)


def nonlinearity(m: IonicModel, vbar, p, q, t):
    """Nonlinear remainder in the ``(p, q)`` equation (quadratic and cubic terms)."""
    a, b, c, g, beta = m.a, m.b, m.c, m.gamma, m.beta
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    e = np.exp(-g * beta * np.asarray(t, dtype=float))
    out = b / g * e * (3.0 * np.asarray(vbar, dtype=float) - (1.0 + a)) * p**2
    out = out + b / g**2 * e**2 * p**3
    if m.kind == RM:
        out = out + c * e * p * q
    return out


def _require_gamma(m: IonicModel):
    if m.gamma <= 0:
        raise ValueError("change of variables needs gamma > 0")


def change_variables_forward(y, z, t, m: IonicModel):
    """``(y, z) -> (p, q) = (gamma e^{gamma beta t} y, e^{gamma beta t} z)``."""
    _require_gamma(m)
    e = np.exp(m.gamma * m.beta * np.asarray(t, dtype=float))
    return m.gamma * e * np.asarray(y, dtype=float), e * np.asarray(z, dtype=float)


def change_variables_inverse(p, q, t, m: IonicModel):
    _require_gamma(m)
    e = np.exp(-m.gamma * m.beta * np.asarray(t, dtype=float))
    return e * np.asarray(p, dtype=float) / m.gamma, e * np.asarray(q, dtype=float)


def time_column(grid) -> np.ndarray:
    return grid.t[:, None]
