"""Command-line experiment harness.

Every subcommand writes CSV tables, ``report.txt`` and ``meta.txt`` (the
fully resolved configuration plus a ``[run]`` section with the subcommand,
its arguments, the seed and library versions) into the output directory.
Exit codes: 0 success, 2 precondition failure, 3 non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import platform
import shlex
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .carleman_lab import (CHECKS, CarlemanCheckConfig, check_conjugation_identity,
                           ode_span_supremum, run_check)
from .config import ConfigError, ExperimentConfig, default_config, load_config, run_section
from .control import (ControlProblem, PreconditionError, fixed_vs_moving_comparison, run_ladder,
                      synthesize_null_control)
from .grid import write_field_csv
from .models import linearize
from .nonlinear import SteeringProblem, basin_sweep, steer_to_trajectory
from .pde import ConvergenceError, solve_monodomain, solve_trajectory
from .plots import emit_plots
from .weights import write_weights_csv

EXIT_OK, EXIT_PRECONDITION, EXIT_NONCONVERGENCE = 0, 2, 3


class NonConvergence(RuntimeError):
    """A solver finished without meeting its tolerance; artifacts are still written."""


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in header])


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"not a comma-separated list of numbers: {text!r}") from None


def _versions() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "monoctrl": __version__}


# --------------------------------------------------------------------------
# shared setup

def _trajectory(cfg: ExperimentConfig, model=None, grid=None):
    model = model or cfg.model()
    g = grid or cfg.grid()
    amp = cfg["initial"]["v0_amplitude"]
    v0 = amp * np.cos(np.pi * g.x / g.L)
    w0 = np.full(g.n + 1, cfg["initial"]["w0"])
    return solve_trajectory(model, g, v0, w0, I_si=cfg.stimulus(g))


def _control_problem(cfg: ExperimentConfig, eps_pen: float) -> ControlProblem:
    g, model = cfg.grid(), cfg.model()
    tr = _trajectory(cfg, model)
    coeffs = linearize(model, tr.v, tr.w, g)
    c = cfg["control"]
    ws = cfg.weights() if c["weighted"] else None
    p0 = cfg.cosine(c["p0_amplitude"])
    q0 = cfg.cosine(c["q0_amplitude"])
    return ControlProblem.from_pq(coeffs, g, cfg.supports().omega, p0, q0, weights=ws,
                                  eps_pen=eps_pen, max_iter=c["max_iter"], tol=c["tol"])


# --------------------------------------------------------------------------
# subcommands; each returns report text and raises on failure

def cmd_simulate(cfg, args, out: Path) -> str:
    g, model = cfg.grid(), cfg.model()
    v0 = cfg.cosine(cfg["initial"]["v0_amplitude"])
    w0 = np.full(g.n + 1, cfg["initial"]["w0"])
    sol = solve_monodomain(model, g, v0, w0, I_si=cfg.stimulus())
    write_field_csv(out / "v.csv", g, sol.v)
    write_field_csv(out / "w.csv", g, sol.w)
    lines = ["scheme = Crank-Nicolson with Newton (w eliminated per step)"]
    lines += [f"{k} = {_fmt(v)}" for k, v in sorted(sol.info.items())]
    lines.append(f"max_abs_v = {_fmt(float(np.max(np.abs(sol.v))))}")
    return "\n".join(lines)


def cmd_trajectory(cfg, args, out: Path) -> str:
    g, model = cfg.grid(), cfg.model()
    tr = _trajectory(cfg, model)
    coeffs = linearize(model, tr.v, tr.w, g)
    write_field_csv(out / "vbar.csv", g, tr.v)
    write_field_csv(out / "wbar.csv", g, tr.w)
    X, T = g.XT
    rows = [{"x": X[k, j], "t": T[k, j], "lp": coeffs.lp[k, j], "lq": coeffs.lq[k, j],
             "A": coeffs.A[k, j]} for k in range(g.m + 1) for j in range(g.n + 1)]
    write_rows(out / "coefficients.csv", ["x", "t", "lp", "lq", "A"], rows)
    lines = [f"{k} = {_fmt(v)}" for k, v in sorted(tr.info.pop("smoothness").items())]
    lines += [f"{k} = {_fmt(v)}" for k, v in sorted(tr.info.items())]
    lines += [f"{k} = {_fmt(v)}" for k, v in sorted(coeffs.diagnostics.items())]
    return "\n".join(lines)


LADDER_COLS = ["eps_pen", "p_T", "q_T", "theta_T", "J", "cg_iterations", "converged"]


def cmd_control_linear(cfg, args, out: Path) -> str:
    eps = args.eps_pen if args.eps_pen is not None else cfg["control"]["eps_pen"]
    prob = _control_problem(cfg, eps)
    g = prob.grid
    rep = synthesize_null_control(prob)
    write_field_csv(out / "control.csv", g, rep.h)
    lines = [f"eps_pen = {_fmt(eps)}", rep.summary()]
    failed = not rep.converged
    eps_list = _floats(args.ladder) if args.ladder else list(cfg["control"]["ladder"])
    rows = run_ladder(prob, eps_list)
    write_rows(out / "ladder.csv", LADDER_COLS, rows)
    failed |= not all(r["converged"] for r in rows)
    lines.append(f"ladder_rows = {len(rows)}")
    if args.fixed_omega:
        lo, hi = _floats(args.fixed_omega)
        cmp_ = fixed_vs_moving_comparison(prob, (lo, hi), eps_list)
        rows = [dict(r, support=kind) for kind in ("moving", "static") for r in cmp_[kind]]
        write_rows(out / "comparison.csv", ["support"] + LADDER_COLS, rows)
        for k in ("moving_reduction_q", "static_reduction_q", "moving_reduction_p", "static_reduction_p"):
            lines.append(f"{k} = {_fmt(cmp_[k])}")
        failed |= not all(r["converged"] for r in rows)
    text = "\n".join(lines)
    if failed:
        raise NonConvergence(text)
    return text


BASIN_COLS = ["delta", "converged", "terminal_error", "outer_iterations", "status"]


def cmd_control_nonlinear(cfg, args, out: Path) -> str:
    nl = cfg["nonlinear"]
    model = cfg.model(args.model)
    g = cfg.grid()
    tr = _trajectory(cfg, model)
    ws = cfg.weights() if cfg["control"]["weighted"] else None
    delta = args.delta if args.delta is not None else nl["delta"]
    pert = np.cos(np.pi * g.x / g.L)
    sp = SteeringProblem(model, g, tr.v, tr.w, tr.v[0] + delta * pert, tr.w[0],
                         cfg.supports().omega, ws, I_si=cfg.stimulus(),
                         tol_terminal=nl["tol_terminal"], max_outer=nl["max_outer"],
                         eps_pen=nl["eps_pen"])
    rep = steer_to_trajectory(sp)
    write_field_csv(out / "stimulation.csv", g, rep.I_se)
    lines = [f"model = {model.kind}", f"delta = {_fmt(delta)}", rep.summary()]
    if args.sweep:
        rows = basin_sweep(sp, _floats(args.sweep), workers=args.threads)
        write_rows(out / "basin.csv", BASIN_COLS, rows)
        lines += [f"basin[{r['delta']!r}] = {r['status']}" for r in rows]
    text = "\n".join(lines)
    if not rep.converged:
        raise NonConvergence(text)
    return text


def cmd_carleman_check(cfg, args, out: Path) -> str:
    lab = cfg["lab"]
    which = args.which or lab["which"]
    grids = tuple(int(v) for v in _floats(args.ladder)) if args.ladder else lab["grids"]
    samples = args.samples if args.samples is not None else lab["samples"]
    ws = cfg.weights()
    sup = cfg.supports()
    base = CarlemanCheckConfig("ode", sup, ws, samples=samples, seed=args.seed, grids=grids,
                               modes=lab["modes"], sigma=cfg["grid"]["sigma"])
    if which == "conjugation":
        rep = check_conjugation_identity(base)
        rows = [{"grid": n, "residual": r, "boundary_residual": b}
                for n, r, b in zip(rep.grids, rep.residual, rep.boundary_residual)]
        write_rows(out / "ratios.csv", ["grid", "residual", "boundary_residual"], rows)
        lines = [f"grid[{n}] residual = {_fmt(r)}" for n, r in zip(rep.grids, rep.residual)]
        lines += [f"order[{i}] = {_fmt(o)}" for i, o in enumerate(rep.orders)]
    else:
        if which not in CHECKS:
            raise ConfigError(f"unknown check {which!r}")
        model = cfg.model()

        def coeffs_for(grid):
            tr = _trajectory(cfg, model, grid)
            c = linearize(model, tr.v, tr.w, grid)
            return c.lp, c.A

        rep = run_check(replace(base, which=which), coeffs_for)
        rows = [{"grid": n, "sample": i, "lhs": rep.lhs[gi, i], "rhs": rep.rhs[gi, i],
                 "ratio": rep.ratio[gi, i]}
                for gi, n in enumerate(rep.grids) for i in range(rep.lhs.shape[1])]
        write_rows(out / "ratios.csv", ["grid", "sample", "lhs", "rhs", "ratio"], rows)
        lines = [f"which = {which}", f"samples = {samples}", f"seed = {args.seed}",
                 f"s = {_fmt(ws.params.s)}", f"lambda = {_fmt(ws.params.lam)}",
                 f"tau = {_fmt(ws.params.tau)}"]
        lines += [f"max_ratio[{n}] = {_fmt(r)}" for n, r in zip(rep.grids, rep.max_ratio)]
        lines += [f"stability_factor = {_fmt(rep.stability)}", f"finite = {rep.finite}"]
        if which == "ode":
            sups = ode_span_supremum(replace(base, which=which))
            lines += [f"span_supremum[{n}] = {_fmt(v)}" for n, v in zip(grids, sups)]
        if not rep.finite:
            raise NonConvergence("\n".join(lines))
    text = "\n".join(lines)
    (out / "summary.txt").write_text(text + "\n")
    return text


def cmd_weights_dump(cfg, args, out: Path) -> str:
    ws = cfg.weights()
    write_weights_csv(out / "weights.csv", ws, cfg.grid())
    p = ws.params
    return "\n".join([f"s = {_fmt(p.s)}", f"lambda = {_fmt(p.lam)}", f"tau = {_fmt(p.tau)}",
                      f"t_cap = {_fmt(ws.t_cap)}", f"M = {_fmt(ws.eta.M)}"])


def _sweep_job(job):
    sub, cfg_path, out_dir, seed, extra = job
    return main([sub, "--config", cfg_path, "--out", out_dir, "--seed", str(seed)] + extra)


SWEEPABLE = ("simulate", "trajectory", "control-linear", "control-nonlinear",
             "carleman-check", "weights-dump")


def cmd_sweep(cfg, args, out: Path) -> str:
    if args.command not in SWEEPABLE:
        raise ConfigError(f"sweep --command must be one of {SWEEPABLE}")
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep --values is empty")
    jobs = []
    for i, val in enumerate(values):
        run_cfg = cfg.with_override(args.param, val)
        d = out / f"run_{i:03d}"
        d.mkdir(parents=True, exist_ok=True)
        (d / "config.ini").write_text(run_cfg.to_ini())
        jobs.append((args.command, str(d / "config.ini"), str(d), args.seed, shlex.split(args.args)))
    if args.threads > 1:
        with ProcessPoolExecutor(max_workers=args.threads) as ex:
            codes = list(ex.map(_sweep_job, jobs))
    else:
        codes = [_sweep_job(j) for j in jobs]
    rows = [{"index": i, "param": args.param, "value": v, "exit_code": c, "dir": f"run_{i:03d}"}
            for i, (v, c) in enumerate(zip(values, codes))]
    write_rows(out / "sweep.csv", ["index", "param", "value", "exit_code", "dir"], rows)
    text = "\n".join(f"{args.param} = {r['value']}: exit {r['exit_code']}" for r in rows)
    if any(c == EXIT_NONCONVERGENCE for c in codes):
        raise NonConvergence(text)
    if any(c != EXIT_OK for c in codes):
        raise ConfigError(text)
    return text


COMMANDS = {
    "simulate": cmd_simulate,
    "trajectory": cmd_trajectory,
    "control-linear": cmd_control_linear,
    "control-nonlinear": cmd_control_nonlinear,
    "carleman-check": cmd_carleman_check,
    "weights-dump": cmd_weights_dump,
    "sweep": cmd_sweep,
}


# --------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration (defaults if omitted)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--threads", type=int, default=1, help="worker processes for fan-out")

    ap = argparse.ArgumentParser(prog="monoctrl", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command_name", required=True)
    sub.add_parser("simulate", parents=[common], help="solve the monodomain system")
    sub.add_parser("trajectory", parents=[common], help="reference trajectory and linearization")
    p = sub.add_parser("control-linear", parents=[common], help="linear null control")
    p.add_argument("--eps-pen", type=float)
    p.add_argument("--ladder", help="comma-separated penalty values")
    p.add_argument("--fixed-omega", help="lo,hi of a static comparison interval")
    p = sub.add_parser("control-nonlinear", parents=[common], help="steer onto the trajectory")
    p.add_argument("--delta", type=float)
    p.add_argument("--sweep", help="comma-separated ascending perturbation sizes")
    p.add_argument("--model", choices=("fhn", "rm"))
    p = sub.add_parser("carleman-check", parents=[common], help="weighted inequality ratios")
    p.add_argument("--which", choices=CHECKS + ("conjugation",))
    p.add_argument("--samples", type=int)
    p.add_argument("--ladder", help="comma-separated grid sizes")
    sub.add_parser("weights-dump", parents=[common], help="write weight fields")
    p = sub.add_parser("sweep", parents=[common], help="run a subcommand over config values")
    p.add_argument("--param", required=True, help="dotted config key, e.g. control.eps_pen")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--command", required=True, help="subcommand to run per value")
    p.add_argument("--args", default="", help="extra arguments for the subcommand")
    p = sub.add_parser("plot", help="SVG plots of the CSVs in a directory")
    p.add_argument("directory")
    p = sub.add_parser("replay", help="re-run an experiment from its meta.txt")
    p.add_argument("meta")
    p.add_argument("--out", required=True)
    return ap


def _resolve(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else default_config()


def _run(args, argv) -> int:
    try:
        cfg = _resolve(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    out = Path(args.out or cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    # flags after the subcommand minus the location/config ones, for replay
    tail, skip = [], False
    for tok in argv[1:]:
        if skip:
            skip = False
            continue
        if tok in ("--config", "--out"):
            skip = True
            continue
        if tok.startswith(("--config=", "--out=")):
            continue
        tail.append(tok)
    run = {"subcommand": args.command_name, "args": shlex.join(tail), "seed": args.seed,
           **_versions()}
    (out / "meta.txt").write_text(cfg.to_ini(extra=run))
    code, text = EXIT_OK, ""
    try:
        text = COMMANDS[args.command_name](cfg, args, out)
    except NonConvergence as exc:
        code, text = EXIT_NONCONVERGENCE, f"NOT CONVERGED\n{exc}"
    except ConvergenceError as exc:
        diag = "\n".join(f"{k} = {_fmt(v)}" for k, v in sorted(exc.diagnostics.items()))
        code, text = EXIT_NONCONVERGENCE, f"NOT CONVERGED\n{exc}\n{diag}"
    except (ConfigError, PreconditionError, ValueError) as exc:
        code, text = EXIT_PRECONDITION, f"PRECONDITION FAILURE\n{exc}"
    (out / "report.txt").write_text(text + "\n")
    if code != EXIT_OK:
        print(text.splitlines()[0] + ": " + " ".join(text.splitlines()[1:2]), file=sys.stderr)
    elif cfg["output"]["plots"]:
        emit_plots(out)
    return code


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    if args.command_name == "plot":
        d = Path(args.directory)
        if not d.is_dir() or not any(d.glob("*.csv")):
            print(f"warning: no CSV files in {d}; nothing plotted", file=sys.stderr)
            return EXIT_OK
        written, missing = emit_plots(d)
        for name in missing:
            print(f"skipped: {name} not found", file=sys.stderr)
        return EXIT_OK
    if args.command_name == "replay":
        run = run_section(args.meta)
        if not run:
            print(f"error: {args.meta} has no [run] section", file=sys.stderr)
            return EXIT_PRECONDITION
        new = [run["subcommand"], "--config", args.meta, "--out", args.out] + shlex.split(run["args"])
        if "--seed" not in new:
            new += ["--seed", run["seed"]]
        return main(new)
    return _run(args, argv)


if __name__ == "__main__":
    sys.exit(main())
