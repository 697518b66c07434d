"""Scenario configuration: schema, validation and problem builders.

A scenario file is an INI document with the sections ``[scenario]``,
``[grid]``, ``[solver]``, ``[model]``, ``[checks]`` and ``[output]``.  Keys
not listed in the schema of the chosen scenario are rejected.
"""
import configparser
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constraints import CircleSegment, GradientBall, HalfLine
from .evolution import StepMode
from .exceptions import ConfigError, ParameterError
from .feedback import AffineField, Box, HalfPlane, HeatRobin, ScalarProjection, SweepDynamics
from .parameters import PiecewiseLinear
from .qvi import QviProblem
from .semimonotone import PLaplacian, ZeroOperator
from .spaces import SpaceMetric, TimeGrid

SCENARIOS = ("scalar-example", "sweep2d", "gradient-pde")


def _floats(text):
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# (parser, default); a default of None marks a required key
_COMMON = {
    "scenario": {"name": (str, None)},
    "grid": {"T": (float, 1.0), "K": (int, None), "p": (float, 2.0)},
    "solver": {
        "tol_fix": (float, 1e-10), "max_outer": (int, 100), "damping": (float, 1.0),
        "step_mode": (str, "plain"), "reg_weight": (float, 1.0), "tol_inner": (float, 1e-11),
        "max_inner": (int, 20000), "seed_count": (int, 1), "cluster_tol": (float, 0.05),
        "tol_weak": (float, float("nan")), "theta_tol": (float, 1e-6), "n_tests": (int, 20),
        "random_seed": (int, 0),
    },
    "checks": {"enabled": (str, "all")},
    "output": {"dir": (str, "")},
}

_MODEL = {
    "scalar-example": {
        "c0_slope": (float, 1.0), "offset": (float, 0.0), "u0": (float, 1.0),
        "forcing": (float, 0.0), "seed_rates": (_floats, []),
    },
    "sweep2d": {
        "zeta0": (_floats, [1.0, 0.0]), "y_kind": (str, "halfplane"),
        "y_normal": (_floats, [1.0, 0.0]), "y_offset": (float, 0.5),
        "y_lo": (_floats, [0.5, -10.0]), "y_hi": (_floats, [10.0, 10.0]),
        "g0": (_floats, [-0.6, 0.4]), "gw": (_floats, [0, 0, 0, 1.0]),
        "gz": (_floats, [0, 0, 0, 0]), "gmax": (float, 5.0),
        "gamma_knots": (_floats, [0.0, 1.0, 2.0]), "gamma_values": (_floats, [0.3, 0.5, 0.6]),
        "gamma_lo": (float, 0.25), "gamma_hi": (float, 1.0),
        "forcing_amp": (float, 2.0), "forcing_freq": (float, 1.0),
        "u0": (_floats, []),
    },
    "gradient-pde": {
        "nodes": (int, 65), "length": (float, 1.0),
        "a_knots": (_floats, [-1.0, 1.0]), "a_values": (_floats, [0.02, 0.01]),
        "gamma_knots": (_floats, [0.0, 0.5, 1.0]), "gamma_values": (_floats, [1.0, 0.7, 0.5]),
        "eps0": (float, 0.5), "n0": (float, 1.0), "heat_gain": (float, 1.0),
        "zeta0": (float, 0.0), "forcing": (float, 4.0), "compat_tol": (float, 1e-8),
    },
}

CHECKS = {
    "scalar-example": ("obstacle_feasibility", "fixed_point", "theta_consistency", "weak_residual",
                       "initial_admissibility", "clusters"),
    "sweep2d": ("segment_feasibility", "fixed_point", "theta_consistency", "weak_residual",
                "initial_admissibility", "zeta_in_Y"),
    "gradient-pde": ("gradient_feasibility", "fixed_point", "theta_consistency", "weak_residual",
                     "initial_admissibility", "heat_bound", "monotonicity"),
}


@dataclass
class ScenarioConfig:
    name: str
    grid: dict
    solver: dict
    model: dict
    checks: tuple
    output_dir: str
    source: str = ""
    raw: dict = field(default_factory=dict)

    def enabled(self, check):
        return check in self.checks


def parse_checks(text, name):
    known = CHECKS[name]
    text = text.strip()
    if text == "all":
        return tuple(known)
    if text == "none":
        return ()
    picked = tuple(c.strip() for c in text.split(",") if c.strip())
    bad = [c for c in picked if c not in known]
    if bad:
        raise ConfigError(f"unknown check(s) {bad}; known: {', '.join(known)}")
    return picked


def load_config(path, overrides=None) -> ScenarioConfig:
    """Parse and validate a scenario file; ``overrides`` maps
    ``(section, key)`` to replacement strings."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    for (sec, key), val in (overrides or {}).items():
        if not cp.has_section(sec):
            cp.add_section(sec)
        cp.set(sec, key, str(val))
    if not cp.has_option("scenario", "name"):
        raise ConfigError("missing [scenario] name")
    name = cp.get("scenario", "name").strip()
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}")
    schema = dict(_COMMON)
    schema["model"] = _MODEL[name]
    for sec in cp.sections():
        if sec not in schema:
            raise ConfigError(f"unknown section [{sec}]")
        for key in cp[sec]:
            if key not in schema[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
    values = {}
    for sec, keys in schema.items():
        values[sec] = {}
        for key, (conv, default) in keys.items():
            if cp.has_option(sec, key):
                try:
                    values[sec][key] = conv(cp.get(sec, key))
                except ValueError as err:
                    raise ConfigError(f"[{sec}] {key}: {err}") from err
            elif default is None:
                raise ConfigError(f"missing required key [{sec}] {key}")
            else:
                values[sec][key] = default
    grid = values["grid"]
    if not grid["p"] >= 2 or not np.isfinite(grid["p"]):
        raise ConfigError(f"[grid] p must satisfy 2 <= p < inf, got {grid['p']}")
    if grid["K"] < 1 or not grid["T"] > 0:
        raise ConfigError("[grid] needs K >= 1 and T > 0")
    solver = values["solver"]
    if solver["step_mode"] not in ("plain", "duality-regularized"):
        raise ConfigError(f"[solver] step_mode {solver['step_mode']!r} unknown")
    if not 0 < solver["damping"] <= 1:
        raise ConfigError("[solver] damping must lie in (0, 1]")
    if solver["tol_fix"] < 0 or solver["seed_count"] < 1:
        raise ConfigError("[solver] needs tol_fix >= 0 and seed_count >= 1")
    raw = {sec: dict(cp[sec]) for sec in cp.sections()}
    return ScenarioConfig(name=name, grid=grid, solver=solver, model=values["model"],
                          checks=parse_checks(values["checks"]["enabled"], name),
                          output_dir=values["output"]["dir"], source=str(path), raw=raw)


# --- builders ------------------------------------------------------------------

@dataclass
class Scenario:
    config: ScenarioConfig
    problem: QviProblem
    seeds: list
    extras: dict = field(default_factory=dict)


def _mode(solver):
    return StepMode(kind=solver["step_mode"], reg_weight=solver["reg_weight"],
                    tol_inner=solver["tol_inner"], max_inner=solver["max_inner"])


def _problem_kwargs(solver):
    tw = solver["tol_weak"]
    return dict(tol_fix=solver["tol_fix"], max_outer=solver["max_outer"], damping=solver["damping"],
                tol_weak=None if np.isnan(tw) else tw, theta_tol=solver["theta_tol"],
                n_tests=solver["n_tests"], mode=_mode(solver))


def build(cfg: ScenarioConfig) -> Scenario:
    try:
        return {"scalar-example": build_scalar, "sweep2d": build_sweep,
                "gradient-pde": build_pde}[cfg.name](cfg)
    except (ParameterError, ValueError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"invalid model data: {err}") from err


def build_scalar(cfg: ScenarioConfig) -> Scenario:
    g, md, sv = cfg.grid, cfg.model, cfg.solver
    grid = TimeGrid(g["T"], g["K"])
    metric = SpaceMetric.euclidean(1, g["p"])
    feedback = ScalarProjection(md["c0_slope"])
    family = HalfLine(md["offset"])
    f = np.full((grid.K + 1, 1), md["forcing"])
    problem = QviProblem(feedback, ZeroOperator(), family, f, np.array([md["u0"]]), grid, metric,
                         **_problem_kwargs(sv))
    # seed_count wins: listed rates are truncated, or padded from an even spread
    n_seeds = sv["seed_count"]
    spread = list(np.linspace(0.0, md["c0_slope"], n_seeds))
    rates = list(md["seed_rates"][:n_seeds]) + spread[len(md["seed_rates"]):]
    if any(not 0 <= c <= md["c0_slope"] for c in rates):
        raise ConfigError("seed_rates must lie in [0, c0_slope]")
    seeds = [(2 - np.exp(-c * grid.nodes))[:, None] for c in rates]
    return Scenario(cfg, problem, seeds, {"seed_rates": [float(c) for c in rates]})


def sweep_parts(md, grid, p):
    if md["y_kind"] == "halfplane":
        Y = HalfPlane(md["y_normal"], md["y_offset"])
    elif md["y_kind"] == "box":
        Y = Box(md["y_lo"], md["y_hi"])
    else:
        raise ConfigError(f"y_kind must be halfplane or box, got {md['y_kind']!r}")
    for key, size in (("zeta0", 2), ("g0", 2), ("gw", 4), ("gz", 4)):
        if len(md[key]) != size:
            raise ConfigError(f"[model] {key} needs {size} numbers")
    G = AffineField(md["g0"], md["gw"], md["gz"], md["gmax"])
    gamma = PiecewiseLinear(md["gamma_knots"], md["gamma_values"])
    return SweepDynamics(G, Y, md["zeta0"], gamma, md["gamma_lo"], md["gamma_hi"], p)


def sweep_forcing(md, grid):
    t = grid.nodes
    amp, freq = md["forcing_amp"], md["forcing_freq"]
    return np.stack([np.zeros_like(t), amp * np.sin(2 * np.pi * freq * t)], axis=1)


def build_sweep(cfg: ScenarioConfig) -> Scenario:
    g, md, sv = cfg.grid, cfg.model, cfg.solver
    grid = TimeGrid(g["T"], g["K"])
    metric = SpaceMetric.euclidean(2, g["p"])
    feedback = sweep_parts(md, grid, g["p"])
    u0 = np.asarray(md["u0"], float) if md["u0"] else feedback.a0.copy()
    if u0.shape != (2,):
        raise ConfigError("[model] u0 needs 2 numbers")
    problem = QviProblem(feedback, ZeroOperator(), CircleSegment(), sweep_forcing(md, grid), u0,
                         grid, metric, **_problem_kwargs(sv))
    rng = np.random.default_rng(sv["random_seed"])
    seeds = [np.tile(u0, (grid.K + 1, 1))]
    for _ in range(sv["seed_count"] - 1):
        seeds.append(u0 + np.cumsum(rng.normal(scale=0.05, size=(grid.K + 1, 2)), axis=0))
    return Scenario(cfg, problem, seeds)


def pde_parts(md, grid, p):
    metric = SpaceMetric.interval(md["nodes"], md["length"], p)
    a_tab = PiecewiseLinear(md["a_knots"], md["a_values"])

    def coef(x, t, v):
        return a_tab(v)

    op = PLaplacian(coef, metric, a_tab.lower, a_tab.upper)
    gamma = PiecewiseLinear(md["gamma_knots"], md["gamma_values"])
    gain = md["heat_gain"]

    def h_fn(x, t, u):
        return gain * np.abs(u)

    feedback = HeatRobin(h_fn, md["n0"], md["zeta0"], gamma, md["eps0"], metric, md["compat_tol"])
    return metric, op, feedback


def pde_forcing(md, grid, metric):
    f = np.full((grid.K + 1, metric.n), md["forcing"])
    f[:, 0] = f[:, -1] = 0.0
    return f


def build_pde(cfg: ScenarioConfig) -> Scenario:
    g, md, sv = cfg.grid, cfg.model, cfg.solver
    grid = TimeGrid(g["T"], g["K"])
    metric, op, feedback = pde_parts(md, grid, g["p"])
    u0 = np.zeros(metric.n)
    problem = QviProblem(feedback, op, GradientBall(metric), pde_forcing(md, grid, metric), u0,
                         grid, metric, **_problem_kwargs(sv))
    rng = np.random.default_rng(sv["random_seed"])
    seeds = [np.zeros((grid.K + 1, metric.n))]
    for _ in range(sv["seed_count"] - 1):
        s = rng.uniform(0, 0.2, size=(grid.K + 1, metric.n))
        s[:, 0] = s[:, -1] = 0.0
        seeds.append(s)
    return Scenario(cfg, problem, seeds)


# --- serialization -------------------------------------------------------------

FLOAT_FMT = "%.17g"


def state_header(name, n):
    if name == "scalar-example":
        return ["t", "u"]
    if name == "sweep2d":
        return ["t", "u1", "u2"]
    return ["t"] + [f"u_{i}" for i in range(n)]


def theta_header(name, n):
    if name == "scalar-example":
        return ["t", "z"]
    if name == "sweep2d":
        return ["t", "a1", "a2", "zeta1", "zeta2"]
    return ["t"] + [f"zeta_{i}" for i in range(n)]


def theta_table(name, theta):
    if name == "scalar-example":
        return theta.z[:, None]
    if name == "sweep2d":
        return np.hstack([theta.a, theta.zeta])
    return theta.zeta


def write_table(path, header, t, data):
    arr = np.column_stack([t, data])
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, arr, fmt=FLOAT_FMT, delimiter=",")


def read_table(path, header):
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first.split(",") != list(header):
        raise ConfigError(f"{path.name}: header {first!r} does not match the scenario schema")
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return arr[:, 0], arr[:, 1:]
