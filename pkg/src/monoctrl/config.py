"""INI experiment configuration: schema, loading, cross-validation and echo."""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .geometry import MovingDomain, NestedSupports, build_nested, check_assumption
from .grid import Grid
from .models import IonicModel
from .weights import CarlemanParams, WeightSet, build_eta, build_weights, default_params


class ConfigError(ValueError):
    """Configuration is unreadable, has unknown keys or violates an invariant."""


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> Optional[float]:
    return None if text.strip() in ("", "auto") else float(text)


# section -> key -> (parser, default text)
SCHEMA = {
    "domain": {"L": (float, "1.0"), "T": (float, "1.0")},
    "grid": {"n": (int, "128"), "m": (int, "128"), "sigma": (float, "1.0")},
    "omega0": {"half_width": (float, "0.2"), "margin": (float, "0.05")},
    "omega1": {"half_width": (float, "0.25")},
    "omega": {"half_width": (float, "0.3")},
    "center": {"samples": (str, "")},
    "model": {"kind": (str, "rm"), "a": (float, "0.13"), "b": (float, "1.0"),
              "c": (float, "1.0"), "gamma": (float, "1.0"), "beta": (float, "1.0")},
    "carleman": {"s": (_opt_float, "auto"), "lambda": (float, "1.5"),
                 "s_scale": (float, "0.5"), "tau": (_opt_float, "auto"),
                 "t_cap_fraction": (float, "0.75")},
    "control": {"eps_pen": (float, "1e-8"), "max_iter": (int, "500"), "tol": (float, "1e-8"),
                "p0_amplitude": (float, "1.0"), "q0_amplitude": (float, "0.0"),
                "weighted": (_bool, "true"), "ladder": (_floats, "1e-4,1e-6,1e-8")},
    "nonlinear": {"delta": (float, "1e-2"), "max_outer": (int, "10"),
                  "tol_terminal": (_opt_float, "auto"), "eps_pen": (float, "1e-8"),
                  "sweep": (_floats, "1e-2,1e-1,1,10")},
    "initial": {"v0_amplitude": (float, "0.0"), "w0": (float, "0.0")},
    "stimulus": {"amplitude": (float, "0.0"), "x0": (float, "0.5"), "width": (float, "0.1"),
                 "t_on": (float, "0.0"), "t_off": (float, "0.1")},
    "lab": {"samples": (int, "100"), "grids": (_ints, "64,128,256"), "modes": (int, "8"),
            "which": (str, "ode")},
    "output": {"dir": (str, "out"), "plots": (_bool, "true")},
}
# sections written by the harness into meta.txt; accepted on reload
RUN_SECTION = "run"


def _fmt(v) -> str:
    if v is None:
        return "auto"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class ExperimentConfig:
    values: dict
    source: str = "<defaults>"

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    # -- builders
    def domain(self) -> MovingDomain:
        d, o0 = self["domain"], self["omega0"]
        path = self["center"]["samples"]
        if path:
            data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
            return MovingDomain.from_samples(d["L"], d["T"], o0["half_width"], data[:, 0], data[:, 1])
        return MovingDomain.sweeping(d["L"], d["T"], o0["half_width"], o0["margin"])

    def supports(self) -> NestedSupports:
        return build_nested(self.domain(), self["omega1"]["half_width"], self["omega"]["half_width"])

    def grid(self) -> Grid:
        d, g = self["domain"], self["grid"]
        return Grid(d["L"], d["T"], g["n"], g["m"], g["sigma"])

    def model(self, kind: Optional[str] = None) -> IonicModel:
        m = dict(self["model"])
        if kind is not None:
            m["kind"] = kind
        return IonicModel(**m)

    def params(self, dom: Optional[MovingDomain] = None, eta=None) -> CarlemanParams:
        dom = dom or self.domain()
        c = self["carleman"]
        eta = eta or build_eta(dom, c["tau"])
        p = default_params(dom, eta, lam=c["lambda"], s_scale=c["s_scale"], tau=c["tau"])
        if c["s"] is not None:
            p = CarlemanParams(c["s"], p.lam, p.tau).validate(dom.T, dom.t1, dom.t2)
        return p

    def weights(self) -> WeightSet:
        dom = self.domain()
        eta = build_eta(dom, self["carleman"]["tau"])
        return build_weights(dom, self.params(dom, eta),
                             t_cap_fraction=self["carleman"]["t_cap_fraction"], eta=eta)

    def cosine(self, amplitude: float) -> np.ndarray:
        g = self.grid()
        return amplitude * np.cos(np.pi * g.x / g.L)

    def stimulus(self, grid: Optional[Grid] = None) -> np.ndarray:
        st, g = self["stimulus"], grid or self.grid()
        X, T = g.XT
        on = (T >= st["t_on"]) & (T <= st["t_off"])
        return st["amplitude"] * np.exp(-(((X - st["x0"]) / st["width"]) ** 2)) * on

    # -- echo
    def to_ini(self, extra: Optional[dict] = None) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for sec, keys in SCHEMA.items():
            cp[sec] = {k: _fmt(self.values[sec][k]) for k in keys}
        if extra:
            cp[RUN_SECTION] = {k: _fmt(v) for k, v in extra.items()}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in cp[sec].items()]
            lines.append("")
        return "\n".join(lines)

    def with_override(self, dotted: str, text: str) -> "ExperimentConfig":
        sec, _, key = dotted.partition(".")
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ConfigError(f"unknown config key {dotted!r}")
        vals = {s: dict(v) for s, v in self.values.items()}
        vals[sec][key] = _parse(sec, key, text)
        return validate(ExperimentConfig(vals, self.source))


def _parse(sec, key, text):
    parser = SCHEMA[sec][key][0]
    try:
        return parser(text)
    except ValueError as exc:
        raise ConfigError(f"{sec}.{key}: cannot parse {text!r} ({exc})") from None


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {exc}") from None
    unknown = [s for s in cp.sections() if s not in SCHEMA and s != RUN_SECTION]
    unknown += [f"{s}.{k}" for s in cp.sections() if s in SCHEMA
                for k in cp[s] if k not in SCHEMA[s]]
    if unknown:
        raise ConfigError("unknown config keys: " + ", ".join(unknown))
    vals = {}
    for sec, keys in SCHEMA.items():
        vals[sec] = {}
        for key, (_, default) in keys.items():
            text_v = cp.get(sec, key, fallback=default) if cp.has_section(sec) else default
            vals[sec][key] = _parse(sec, key, text_v)
    return validate(ExperimentConfig(vals, source))


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from None
    return parse_config(text, str(p))


def run_section(path) -> dict:
    """The ``[run]`` section of a ``meta.txt`` echo (empty if absent)."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read(path)
    return dict(cp[RUN_SECTION]) if cp.has_section(RUN_SECTION) else {}


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    """Cross-section invariants; raises ConfigError naming the violated one."""
    v = cfg.values
    L, T = v["domain"]["L"], v["domain"]["T"]
    l0, eps = v["omega0"]["half_width"], v["omega0"]["margin"]
    l1, lw = v["omega1"]["half_width"], v["omega"]["half_width"]

    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(L > 0 and T > 0, "domain.L and domain.T must be positive")
    need(v["grid"]["n"] >= 4 and v["grid"]["m"] >= 4, "grid.n and grid.m must be >= 4")
    need(v["grid"]["sigma"] > 0, "grid.sigma must be positive")
    need(0 < eps, "omega0.margin must be positive")
    need(2 * l0 < L, f"2 * omega0.half_width = {2 * l0} must be < L = {L}")
    need(l0 > eps, f"omega0.half_width = {l0} must exceed omega0.margin = {eps}")
    need(l0 < l1 < lw < L / 2,
         f"half-widths must satisfy omega0 < omega1 < omega < L/2: {l0}, {l1}, {lw}, {L / 2}")
    need(v["model"]["kind"] in ("rm", "fhn"), f"model.kind must be rm or fhn, got {v['model']['kind']!r}")
    need(all(v["model"][k] >= 0 for k in ("a", "b", "c", "gamma", "beta")),
         "model parameters must be nonnegative")
    need(v["control"]["eps_pen"] > 0 and v["nonlinear"]["eps_pen"] > 0, "eps_pen must be positive")
    need(v["control"]["max_iter"] >= 1, "control.max_iter must be >= 1")
    need(0 < v["carleman"]["t_cap_fraction"] < 1, "carleman.t_cap_fraction must lie in (0, 1)")
    need(v["carleman"]["lambda"] >= 1, "carleman.lambda must be >= 1")
    need(v["lab"]["samples"] >= 10, "lab.samples must be >= 10")
    g = v["lab"]["grids"]
    need(len(g) >= 1 and all(b > a for a, b in zip(g, g[1:])), "lab.grids must be strictly increasing")
    need(v["stimulus"]["width"] > 0, "stimulus.width must be positive")
    try:
        dom = cfg.domain()
    except (ValueError, OSError) as exc:
        raise ConfigError(f"invalid moving domain: {exc}") from None
    rep = check_assumption(dom)
    need(rep.passed, "moving domain violates the geometric assumption:\n" + str(rep))
    tau = v["carleman"]["tau"]
    if tau is not None:
        bound = min(dom.t1, T - dom.t2)
        need(0 < tau <= bound, f"carleman.tau = {tau} must satisfy 0 < tau <= min(t1, T - t2) = {bound}")
    return cfg


def default_config() -> ExperimentConfig:
    return parse_config("", "<defaults>")
