"""Space-time grids, the flux-form Neumann operator and field I/O.

Fields are plain ``numpy`` arrays of shape ``(m + 1, n + 1)``: time levels
first, spatial nodes second.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Union

import numpy as np
from scipy.linalg import lapack

Conductivity = Union[float, Callable[[np.ndarray], np.ndarray]]


def eval_sigma(sigma: Conductivity, x: np.ndarray) -> np.ndarray:
    if callable(sigma):
        return np.broadcast_to(np.asarray(sigma(x), dtype=float), x.shape).copy()
    return np.full_like(x, float(sigma))


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[0, L] x [0, T]`` with ``n`` cells and ``m`` steps."""

    L: float
    T: float
    n: int
    m: int
    sigma: Conductivity = 1.0

    def __post_init__(self):
        if self.L <= 0 or self.T <= 0:
            raise ValueError("L and T must be positive")
        if self.n < 2 or self.m < 1:
            raise ValueError("need n >= 2 cells and m >= 1 steps")
        if np.any(eval_sigma(self.sigma, self.x_half) <= 0):
            raise ValueError("conductivity must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m + 1, self.n + 1)

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def dt(self) -> float:
        return self.T / self.m

    @cached_property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.n + 1)

    @cached_property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.m + 1)

    @cached_property
    def x_half(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.dx

    @cached_property
    def mu(self) -> np.ndarray:
        """Spatial quadrature weights (half cells at the two ends)."""
        w = np.full(self.n + 1, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w

    @cached_property
    def wt(self) -> np.ndarray:
        """Trapezoidal time weights."""
        w = np.full(self.m + 1, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    @cached_property
    def weights(self) -> np.ndarray:
        return np.outer(self.wt, self.mu)

    @cached_property
    def XT(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(X, T)`` with field layout."""
        tt, xx = np.meshgrid(self.t, self.x, indexing="ij")
        return xx, tt

    @cached_property
    def stiffness_bands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Bands ``(dl, d, du)`` of ``K0 u ~ -(sigma u_x)_x`` with zero boundary flux.

        The end rows are half-cell balances, so ``diag(mu) @ K0`` is symmetric.
        """
        s = eval_sigma(self.sigma, self.x_half) / self.dx**2
        d = np.empty(self.n + 1)
        d[1:-1] = s[:-1] + s[1:]
        d[0] = 2.0 * s[0]
        d[-1] = 2.0 * s[-1]
        du = -s.copy()
        du[0] *= 2.0
        dl = -s.copy()
        dl[-1] *= 2.0
        return dl, d, du

    def same_as(self, other: "Grid") -> bool:
        return (self.L, self.T, self.n, self.m) == (other.L, other.T, other.n, other.m)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check_field(self, f, name: str = "field") -> np.ndarray:
        arr = np.asarray(f, dtype=float)
        if arr.shape != self.shape:
            raise ValueError(f"{name} has shape {arr.shape}, grid expects {self.shape}")
        return arr

    def check_profile(self, f, name: str = "profile") -> np.ndarray:
        arr = np.asarray(f, dtype=float)
        if arr.ndim == 0:
            return np.full(self.n + 1, float(arr))
        if arr.shape != (self.n + 1,):
            raise ValueError(f"{name} has shape {arr.shape}, grid expects ({self.n + 1},)")
        return arr

    def as_field(self, f, name: str = "field") -> np.ndarray:
        """Broadcast scalars, profiles and ``None`` to a full field."""
        if f is None:
            return self.zeros()
        arr = np.asarray(f, dtype=float)
        if arr.ndim == 0:
            return np.full(self.shape, float(arr))
        if arr.shape == (self.n + 1,):
            return np.broadcast_to(arr, self.shape).copy()
        return self.check_field(arr, name)

    def apply_K0(self, u: np.ndarray) -> np.ndarray:
        """Apply the Neumann diffusion operator along axis 0 of ``u``."""
        return tri_matvec(*self.stiffness_bands, u)

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        """Discrete space-time inner product."""
        return float(np.sum(self.weights * a * b))

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.inner(a, a)))

    def space_inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(self.mu * a * b))

    def space_norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.space_inner(a, a)))

    def refine(self, factor: int = 2) -> "Grid":
        return Grid(self.L, self.T, self.n * factor, self.m * factor, self.sigma)


def tri_matvec(dl, d, du, u):
    u = np.asarray(u, dtype=float)
    shape = (-1,) + (1,) * (u.ndim - 1)
    out = d.reshape(shape) * u
    out[:-1] += du.reshape(shape) * u[1:]
    out[1:] += dl.reshape(shape) * u[:-1]
    return out


class TriFactor:
    """LU factorization of ``I + a*K0 + diag(b)`` for repeated solves."""

    def __init__(self, grid: Grid, a: float, b=0.0):
        dl, d, du = grid.stiffness_bands
        diag = 1.0 + a * d + np.broadcast_to(np.asarray(b, dtype=float), d.shape)
        self.bands = (a * dl, diag, a * du)
        out = lapack.dgttrf(a * dl, diag, a * du)
        *self._lu, info = out
        if info != 0:
            raise np.linalg.LinAlgError(f"singular step matrix (dgttrf info={info})")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        b = np.asarray(rhs, dtype=float)
        flat = b.reshape(b.shape[0], -1)
        x, info = lapack.dgttrs(*self._lu, flat)
        if info != 0:
            raise np.linalg.LinAlgError(f"dgttrs failed (info={info})")
        return x.reshape(b.shape)


def write_field_csv(path, grid: Grid, field: np.ndarray) -> None:
    """Write a field as ``x,t,value`` rows (time-major)."""
    field = grid.check_field(field)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "t", "value"])
        for k, tk in enumerate(grid.t):
            for j, xj in enumerate(grid.x):
                w.writerow([repr(float(xj)), repr(float(tk)), repr(float(field[k, j]))])


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read an ``x,t,value`` file back into ``(x, t, field)``."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x = np.unique(data[:, 0])
    t = np.unique(data[:, 1])
    field = data[:, 2].reshape(len(t), len(x))
    return x, t, field
