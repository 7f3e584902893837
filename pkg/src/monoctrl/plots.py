"""Self-contained SVG line plots of experiment CSVs (byte-deterministic)."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .grid import read_field_csv

W, H, PAD = 480, 320, 56
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _num(v: float) -> str:
    return f"{v:.2f}"


def _tick(v: float) -> str:
    return f"{v:.3g}"


def line_plot_svg(series: Sequence[tuple], title: str, xlabel: str, ylabel: str,
                  logx: bool = False, logy: bool = False) -> str:
    """``series`` holds ``(label, xs, ys)``; nonpositive values are dropped on log axes."""
    clean = []
    for label, xs, ys in series:
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        if logx:
            ok &= xs > 0
        if logy:
            ok &= ys > 0
        if np.any(ok):
            clean.append((label, np.log10(xs[ok]) if logx else xs[ok],
                          np.log10(ys[ok]) if logy else ys[ok]))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W // 2}" y="18" text-anchor="middle" font-size="13">{title}</text>']
    if clean:
        allx = np.concatenate([c[1] for c in clean])
        ally = np.concatenate([c[2] for c in clean])
        x0, x1 = float(allx.min()), float(allx.max())
        y0, y1 = float(ally.min()), float(ally.max())
        if x1 == x0:
            x0, x1 = x0 - 0.5, x1 + 0.5
        if y1 == y0:
            y0, y1 = y0 - 0.5, y1 + 0.5
        sx = lambda v: PAD + (v - x0) / (x1 - x0) * (W - 2 * PAD)
        sy = lambda v: H - PAD - (v - y0) / (y1 - y0) * (H - 2 * PAD)
        out.append(f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
                   'fill="none" stroke="black"/>')
        for v in np.linspace(x0, x1, 5):
            lab = _tick(10**v) if logx else _tick(v)
            out.append(f'<text x="{_num(sx(v))}" y="{H - PAD + 16}" text-anchor="middle">{lab}</text>')
        for v in np.linspace(y0, y1, 5):
            lab = _tick(10**v) if logy else _tick(v)
            out.append(f'<text x="{PAD - 6}" y="{_num(sy(v) + 4)}" text-anchor="end">{lab}</text>')
        for i, (label, xs, ys) in enumerate(clean):
            col = COLORS[i % len(COLORS)]
            pts = " ".join(f"{_num(sx(a))},{_num(sy(b))}" for a, b in zip(xs, ys))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="1.5"/>')
            if len(xs) <= 12:
                out += [f'<circle cx="{_num(sx(a))}" cy="{_num(sy(b))}" r="2.5" fill="{col}"/>'
                        for a, b in zip(xs, ys)]
            out.append(f'<text x="{W - PAD + 4}" y="{PAD + 14 * i + 10}" fill="{col}">{label}</text>')
    out.append(f'<text x="{W // 2}" y="{H - 12}" text-anchor="middle">{xlabel}</text>')
    out.append(f'<text x="14" y="{H // 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {H // 2})">{ylabel}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _read_rows(path: Path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _snapshots(path: Path) -> str:
    x, t, f = read_field_csv(path)
    idx = sorted({int(round(r * (len(t) - 1))) for r in (0.0, 0.25, 0.5, 0.75, 1.0)})
    series = [(f"t={t[k]:.3g}", x, f[k]) for k in idx]
    return line_plot_svg(series, f"{path.stem} snapshots", "x", path.stem)


def _ladder(path: Path) -> str:
    rows = _read_rows(path)
    eps = [float(r["eps_pen"]) for r in rows]
    series = [(k, eps, [float(r[k]) for r in rows]) for k in ("p_T", "q_T", "theta_T") if k in rows[0]]
    return line_plot_svg(series, "terminal norms vs penalty", "eps_pen", "norm at T",
                         logx=True, logy=True)


def _ratios(path: Path) -> str:
    rows = _read_rows(path)
    if "ratio" in rows[0]:
        grids = sorted({int(r["grid"]) for r in rows})
        mx = [max(float(r["ratio"]) for r in rows if int(r["grid"]) == g) for g in grids]
        return line_plot_svg([("max ratio", grids, mx)], "Carleman ratio vs grid", "n", "max LHS/RHS",
                             logx=True, logy=True)
    grids = [int(r["grid"]) for r in rows]
    res = [float(r["residual"]) for r in rows]
    return line_plot_svg([("residual", grids, res)], "conjugation residual vs grid", "n",
                         "relative residual", logx=True, logy=True)


PLOTTERS = {
    "v.csv": ("v_snapshots.svg", _snapshots),
    "vbar.csv": ("vbar_snapshots.svg", _snapshots),
    "ladder.csv": ("ladder.svg", _ladder),
    "ratios.csv": ("ratios.svg", _ratios),
}


def emit_plots(artifact_dir) -> tuple:
    """Write one SVG per recognized CSV; returns ``(written, missing)`` file names."""
    d = Path(artifact_dir)
    written, missing = [], []
    for name, (svg, fn) in PLOTTERS.items():
        src = d / name
        if not src.exists():
            missing.append(name)
            continue
        (d / svg).write_text(fn(src))
        written.append(svg)
    return written, missing
