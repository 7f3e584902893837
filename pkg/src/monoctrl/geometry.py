"""Moving control supports on ``(0, L)``.

A support is an interval of fixed half-width around a time-dependent
center. The sweeping family (center moving from ``margin`` to
``L - margin``) is the canonical one; static intervals are representable
too so that they can be rejected by :func:`check_assumption`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq


@dataclass(frozen=True)
class Interval1D:
    lo: float
    hi: float
    L: Optional[float] = None

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty interval ({self.lo}, {self.hi})")
        if self.lo < 0.0 or (self.L is not None and self.hi > self.L):
            raise ValueError(f"interval ({self.lo}, {self.hi}) must lie in [0, L]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def contains(self, x):
        x = np.asarray(x)
        return (x > self.lo) & (x < self.hi)


@dataclass(frozen=True)
class _Polynomial1:
    """``c0 + c1 t`` (or its derivative of the given order); picklable."""

    c0: float
    c1: float
    order: int = 0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.order == 0:
            return self.c0 + self.c1 * t
        if self.order == 1:
            return np.full_like(t, self.c1)
        return np.zeros_like(t)


def _affine_center(L, T, margin):
    slope = (L - 2.0 * margin) / T
    return tuple(_Polynomial1(margin, slope, k) for k in range(3))


@dataclass(frozen=True)
class MovingDomain:
    """``omega(t) = (c(t) - half_width, c(t) + half_width) ∩ (0, L)``."""

    L: float
    T: float
    half_width: float
    center: Callable
    center_dt: Callable
    center_dtt: Callable
    margin: Optional[float] = None
    kind: str = "sweeping"

    @classmethod
    def sweeping(cls, L=1.0, T=1.0, half_width=0.2, margin=0.05) -> "MovingDomain":
        """Affine sweep ``c(t) = margin + (L - 2 margin) t / T``."""
        if not 0 < margin < L / 2:
            raise ValueError("margin must lie in (0, L/2)")
        if half_width <= 0:
            raise ValueError("half_width must be positive")
        c, cd, cdd = _affine_center(L, T, margin)
        return cls(L, T, half_width, c, cd, cdd, margin, "sweeping")

    @classmethod
    def from_samples(cls, L, T, half_width, ts, cs) -> "MovingDomain":
        """Tabulated center, interpolated by a monotone cubic (PCHIP)."""
        ts = np.asarray(ts, dtype=float)
        cs = np.asarray(cs, dtype=float)
        if ts.ndim != 1 or ts.shape != cs.shape or len(ts) < 2:
            raise ValueError("center samples must be two 1D arrays of equal length >= 2")
        if not np.all(np.diff(ts) > 0):
            raise ValueError("center sample times must be strictly increasing")
        if not np.all(np.diff(cs) > 0):
            raise ValueError("center samples must be strictly increasing")
        if not (np.isclose(ts[0], 0.0) and np.isclose(ts[-1], T)):
            raise ValueError("center samples must span [0, T]")
        interp = PchipInterpolator(ts, cs)
        d1, d2 = interp.derivative(1), interp.derivative(2)
        margin = float(cs[0])
        if not np.isclose(cs[-1], L - margin):
            raise ValueError("center must end at L - c(0) (symmetric margins)")
        return cls(L, T, half_width, interp, d1, d2, margin, "sweeping")

    @classmethod
    def static(cls, L, T, lo, hi) -> "MovingDomain":
        iv = Interval1D(lo, hi, L)
        mid = 0.5 * (iv.lo + iv.hi)
        return cls(L, T, 0.5 * iv.length, _Polynomial1(mid, 0.0, 0),
                   _Polynomial1(mid, 0.0, 1), _Polynomial1(mid, 0.0, 2), None, "static")

    def with_half_width(self, half_width: float) -> "MovingDomain":
        return replace(self, half_width=half_width)

    def bounds(self, t):
        c = self.center(t)
        return np.maximum(c - self.half_width, 0.0), np.minimum(c + self.half_width, self.L)

    def contains(self, x, t):
        """Membership of ``x`` in omega(t); broadcasts ``x`` against ``t``."""
        return np.abs(np.asarray(x) - self.center(t)) < self.half_width

    def mask(self, grid) -> np.ndarray:
        xx, tt = grid.XT
        return self.contains(xx, tt).astype(float)

    def _crossing(self, level: float) -> Optional[float]:
        f = lambda t: float(self.center(t)) - level
        f0, f1 = f(0.0), f(self.T)
        if f0 == 0.0:
            return 0.0
        if f0 * f1 > 0:
            return None
        return brentq(f, 0.0, self.T, xtol=1e-14, rtol=1e-14)

    @property
    def t1(self) -> Optional[float]:
        """Time at which the left edge leaves x = 0 (``c(t1) = half_width``)."""
        if self.kind != "sweeping":
            return None
        return self._crossing(self.half_width)

    @property
    def t2(self) -> Optional[float]:
        """Time at which the right edge reaches x = L (``c(t2) = L - half_width``)."""
        if self.kind != "sweeping":
            return None
        return self._crossing(self.L - self.half_width)

    def complement_components(self, t) -> np.ndarray:
        """Number of connected components of ``(0, L) minus omega(t)``."""
        c = np.asarray(self.center(t))
        left = (c - self.half_width) > 0
        right = (c + self.half_width) < self.L
        return left.astype(int) + right.astype(int)


@dataclass
class AssumptionReport:
    passed: bool
    clauses: dict
    t1: Optional[float]
    t2: Optional[float]
    diagnostics: list = field(default_factory=list)

    def __str__(self):
        lines = [f"assumption: {'PASS' if self.passed else 'FAIL'}"]
        for k in "abcd":
            lines.append(f"  clause ({k}): {'ok' if self.clauses[k] else 'violated'}")
        lines.append(f"  t1 = {self.t1}, t2 = {self.t2}")
        lines += [f"  note: {d}" for d in self.diagnostics]
        return "\n".join(lines)


def check_assumption(dom: MovingDomain, nt: int = 201, n: int = 256) -> AssumptionReport:
    """Check the four geometric clauses on ``nt`` sampled times in ``(0, T)``."""
    if nt < 3:
        raise ValueError("need at least 3 time samples")
    ts = np.linspace(0.0, dom.T, nt + 2)[1:-1]
    diag = []
    c = np.asarray(dom.center(ts), dtype=float)
    lo, hi = c - dom.half_width, c + dom.half_width

    full = (lo <= 0) & (hi >= dom.L)
    clause_a = not bool(np.any(full))
    if not clause_a:
        diag.append("omega0(t) covers all of (0, L) at some time"
                    + (" (half_width >= L/2)" if dom.half_width >= dom.L / 2 else ""))

    # union coverage on cell midpoints; the two ends need strict overlap
    mids = (np.arange(n) + 0.5) * dom.L / n
    covered = np.zeros(n, dtype=bool)
    for a, b in zip(lo, hi):
        covered |= (mids > a) & (mids < b)
    c_end = np.asarray(dom.center(np.array([0.0, dom.T])), dtype=float)
    ends_ok = (c_end[0] - dom.half_width < 0) and (c_end[1] + dom.half_width > dom.L)
    clause_b = bool(covered.all()) and ends_ok
    if not covered.all():
        diag.append(f"{int((~covered).sum())} of {n} cells never covered")
    if not ends_ok:
        diag.append("the sweep does not reach past both ends of (0, L) (needs half_width > margin)")

    comps = dom.complement_components(ts)
    t1, t2 = dom.t1, dom.t2
    if t1 is None or t2 is None:
        # fall back to the sampled pattern 1..1 2..2 1..1
        two = np.flatnonzero(comps == 2)
        if two.size:
            t1 = float(ts[two[0] - 1]) if two[0] > 0 else None
            t2 = float(ts[two[-1] + 1]) if two[-1] + 1 < nt else None
    if t1 is None or t2 is None or not (0 < t1 < t2 < dom.T):
        clause_c = bool(np.all(comps == 1))
        clause_d = False
        diag.append("no witnesses 0 < t1 < t2 < T")
    else:
        outer = (ts <= t1) | (ts >= t2)
        clause_c = bool(np.all(comps[outer] == 1))
        clause_d = bool(np.all(comps[~outer] == 2)) and bool(np.any(~outer))
        if not clause_c:
            diag.append("complement not connected outside (t1, t2)")
        if not clause_d:
            diag.append("complement does not split in two on (t1, t2)")
    clauses = {"a": clause_a, "b": clause_b, "c": clause_c, "d": clause_d}
    return AssumptionReport(all(clauses.values()), clauses, t1, t2, diag)


@dataclass(frozen=True)
class NestedSupports:
    omega0: MovingDomain
    omega1: MovingDomain
    omega: MovingDomain

    def check_margins(self, dx: float) -> bool:
        return (self.omega1.half_width - self.omega0.half_width >= dx
                and self.omega.half_width - self.omega1.half_width >= dx)

    def with_control_domain(self, omega: MovingDomain) -> "NestedSupports":
        """Replace the outer control support (used for fixed-support comparisons)."""
        return replace(self, omega=omega)


def build_nested(dom: MovingDomain, l1: float, lw: float) -> NestedSupports:
    """Concentric supports ``omega0 ⊂ omega1 ⊂ omega`` around the same center."""
    l0 = dom.half_width
    if not l0 < l1:
        raise ValueError(f"omega1 half-width {l1} must exceed omega0 half-width {l0}")
    if not l1 < lw:
        raise ValueError(f"omega half-width {lw} must exceed omega1 half-width {l1}")
    if not lw < dom.L / 2:
        raise ValueError(f"omega half-width {lw} must be below L/2 = {dom.L / 2}")
    return NestedSupports(dom, dom.with_half_width(l1), dom.with_half_width(lw))


def smoothstep5(u):
    u = np.clip(u, 0.0, 1.0)
    return u**3 * (10.0 - 15.0 * u + 6.0 * u**2)


def cutoff(sup: NestedSupports, inner: str, x, t):
    """Smooth cutoff equal to 1 on the inner set and 0 outside the outer one.

    ``inner="01"`` ramps between omega0 and omega1, ``inner="1w"`` between
    omega1 and omega.
    """
    pairs = {"01": (sup.omega0, sup.omega1), "1w": (sup.omega1, sup.omega)}
    if inner not in pairs:
        raise ValueError("inner must be '01' or '1w'")
    a, b = pairs[inner]
    d = np.abs(np.asarray(x, dtype=float) - a.center(t))
    u = (d - a.half_width) / (b.half_width - a.half_width)
    return 1.0 - smoothstep5(u)
