"""Scenario configuration files, presets and result serialization.

Configs are YAML documents::

    name: paper-fig1
    domain: {a: 0.0, b: 6.283185307179586}
    n_cells: 200
    s: 1.0
    T: 10.0
    n_steps: 1000
    bc: {left: 1.2, right: 1.2}
    u0: {kind: sine, amplitude: 1.0, frequency: 1.0, phase: 0.0, offset: 1.2}
    v0: {kind: constant, value: -2.0}
    obstacle: {lower: {kind: constant, value: 0.0}}    # or null, or lower+upper
    solver: {grad_tol: 1.0e-10, max_iters: 100000}
    output: {stride: 10, dir: out/paper-fig1}

Profiles come from a closed vocabulary (``constant``, ``sine``, ``table``);
no expressions are evaluated.
"""
from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigError, UnknownPresetError
from .evolution import Scenario, TrajectoryRecord
from .grid_fem import FieldP1, Grid1D
from .step_solver import SolverConfig
from .verification import StabilizationReport

PROFILE_KINDS = {
    "constant": {"value": 0.0},
    "sine": {"amplitude": 1.0, "frequency": 1.0, "phase": 0.0, "offset": 0.0},
    "table": {"x": None, "y": None},
}


def _num(value, where):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{where}: must be finite")
    return float(value)


def normalize_profile(spec, where: str) -> dict:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{where}: profile must be a mapping with a 'kind' key")
    kind = spec["kind"]
    if kind not in PROFILE_KINDS:
        raise ConfigError(f"{where}.kind: unknown profile {kind!r}; choose from {sorted(PROFILE_KINDS)}")
    extra = set(spec) - set(PROFILE_KINDS[kind]) - {"kind"}
    if extra:
        raise ConfigError(f"{where}: unexpected keys {sorted(extra)} for kind {kind!r}")
    out = {"kind": kind}
    if kind == "table":
        xs, ys = spec.get("x"), spec.get("y")
        if not isinstance(xs, list) or not isinstance(ys, list) or len(xs) != len(ys) or len(xs) < 2:
            raise ConfigError(f"{where}: table needs equal-length lists x and y with >= 2 entries")
        xs = [_num(v, f"{where}.x") for v in xs]
        ys = [_num(v, f"{where}.y") for v in ys]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ConfigError(f"{where}.x: must be strictly increasing")
        out.update(x=xs, y=ys)
        return out
    for key, default in PROFILE_KINDS[kind].items():
        out[key] = _num(spec.get(key, default), f"{where}.{key}")
    return out


def profile_function(spec: dict):
    kind = spec["kind"]
    if kind == "constant":
        c = spec["value"]
        return lambda x: np.full(np.shape(x), c)
    if kind == "sine":
        A, k, p, c = spec["amplitude"], spec["frequency"], spec["phase"], spec["offset"]
        return lambda x: A * np.sin(k * np.asarray(x) + p) + c
    xs, ys = np.array(spec["x"]), np.array(spec["y"])
    return lambda x: np.interp(x, xs, ys)


@dataclass
class ScenarioConfig:
    name: str
    domain: dict
    n_cells: int
    s: float
    T: float
    n_steps: int
    bc: dict
    u0: dict
    v0: dict
    obstacle: Optional[dict] = None
    solver: dict = field(default_factory=lambda: {"grad_tol": 1e-10, "max_iters": 100_000})
    output: dict = field(default_factory=lambda: {"stride": 1, "dir": "out"})
    experimental: bool = False

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    @property
    def tau(self) -> float:
        return self.T / self.n_steps


def _int(value, where, minimum):
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{where}: expected an integer >= {minimum}, got {value!r}")
    return value


def config_from_dict(data) -> ScenarioConfig:
    """Validate a plain mapping and return a ScenarioConfig.

    Error messages name the offending field.
    """
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    known = set(ScenarioConfig.__dataclass_fields__)
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown top-level keys {sorted(extra)}")
    for key in ("domain", "n_cells", "s", "T", "n_steps", "u0", "v0"):
        if key not in data:
            raise ConfigError(f"{key}: missing")
    dom = data["domain"]
    if not isinstance(dom, dict) or set(dom) != {"a", "b"}:
        raise ConfigError("domain: expected a mapping with keys a and b")
    a, b = _num(dom["a"], "domain.a"), _num(dom["b"], "domain.b")
    if not b > a:
        raise ConfigError("domain: need a < b")
    n_cells = _int(data["n_cells"], "n_cells", 2)
    s = _num(data["s"], "s")
    if not 0 < s <= 1:
        raise ConfigError(f"s: fractional order must lie in (0, 1], got {s}")
    T = _num(data["T"], "T")
    if not T > 0:
        raise ConfigError("T: must be positive")
    n_steps = _int(data["n_steps"], "n_steps", 1)
    bc = data.get("bc", {"left": 0.0, "right": 0.0})
    if not isinstance(bc, dict) or set(bc) != {"left", "right"}:
        raise ConfigError("bc: expected a mapping with keys left and right")
    bc = {"left": _num(bc["left"], "bc.left"), "right": _num(bc["right"], "bc.right")}
    if s < 1 and (bc["left"] != 0 or bc["right"] != 0):
        raise ConfigError(
            "bc: fractional order s < 1 requires zero exterior data (u = 0 outside the domain), "
            f"got left={bc['left']}, right={bc['right']}"
        )
    u0 = normalize_profile(data["u0"], "u0")
    v0 = normalize_profile(data["v0"], "v0")
    obstacle = data.get("obstacle")
    if obstacle is not None:
        if not isinstance(obstacle, dict) or "lower" not in obstacle or set(obstacle) - {"lower", "upper"}:
            raise ConfigError("obstacle: expected null or a mapping with 'lower' and optional 'upper'")
        obstacle = {k: normalize_profile(v, f"obstacle.{k}") for k, v in obstacle.items()}
    solver = dict(data.get("solver") or {})
    extra = set(solver) - {"grad_tol", "max_iters"}
    if extra:
        raise ConfigError(f"solver: unknown keys {sorted(extra)}")
    solver = {
        "grad_tol": _num(solver.get("grad_tol", 1e-10), "solver.grad_tol"),
        "max_iters": _int(solver.get("max_iters", 100_000), "solver.max_iters", 1),
    }
    if not solver["grad_tol"] > 0:
        raise ConfigError("solver.grad_tol: must be positive")
    output = dict(data.get("output") or {})
    extra = set(output) - {"stride", "dir"}
    if extra:
        raise ConfigError(f"output: unknown keys {sorted(extra)}")
    output = {
        "stride": _int(output.get("stride", 1), "output.stride", 1),
        "dir": str(output.get("dir", "out")),
    }
    experimental = data.get("experimental", False)
    if not isinstance(experimental, bool):
        raise ConfigError("experimental: expected true or false")
    name = str(data.get("name", "scenario"))
    cfg = ScenarioConfig(
        name, {"a": a, "b": b}, n_cells, s, T, n_steps, bc, u0, v0, obstacle, solver, output, experimental
    )
    build_scenario(cfg)  # surfaces obstacle/data inconsistencies at parse time
    return cfg


def parse_config(text: str) -> ScenarioConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    return config_from_dict(data)


def serialize_config(cfg: ScenarioConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def load_config(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    grid = Grid1D(cfg.domain["a"], cfg.domain["b"], cfg.n_cells)
    x = grid.nodes
    sources = {"u0": profile_function(cfg.u0), "v0": profile_function(cfg.v0)}
    if cfg.obstacle:
        for k, spec in cfg.obstacle.items():
            sources["lower" if k == "lower" else "upper"] = profile_function(spec)

    def make(name, bl, br):
        vals = np.asarray(sources[name](x), dtype=float)
        return FieldP1(grid, vals[1:-1], vals[0] if bl is None else bl, vals[-1] if br is None else br)

    u0 = make("u0", cfg.bc["left"], cfg.bc["right"])
    v0 = make("v0", 0.0, 0.0) if cfg.s < 1 else make("v0", None, None)
    lower = make("lower", None, None) if "lower" in sources else None
    upper = make("upper", None, None) if "upper" in sources else None
    solver = SolverConfig(grad_tol=cfg.solver["grad_tol"], max_iters=cfg.solver["max_iters"])
    try:
        return Scenario(
            grid, cfg.s, cfg.T, cfg.n_steps, u0, v0, lower, upper, solver, cfg.name, sources
        )
    except ValueError as exc:
        raise ConfigError(f"scenario is inconsistent: {exc}") from exc


def _free_sine(name, s):
    return ScenarioConfig(
        name=name,
        domain={"a": 0.0, "b": math.pi},
        n_cells=100,
        s=s,
        T=math.pi,
        n_steps=100,
        bc={"left": 0.0, "right": 0.0},
        u0={"kind": "sine", "amplitude": 1.0, "frequency": 1.0, "phase": 0.0, "offset": 0.0},
        v0={"kind": "constant", "value": 0.0},
        obstacle=None,
        output={"stride": 1, "dir": f"out/{name}"},
    )


def _presets() -> dict:
    fig1 = ScenarioConfig(
        name="paper-fig1",
        domain={"a": 0.0, "b": 2 * math.pi},
        n_cells=200,
        s=1.0,
        T=10.0,
        n_steps=1000,
        bc={"left": 1.2, "right": 1.2},
        u0={"kind": "sine", "amplitude": 1.0, "frequency": 1.0, "phase": 0.0, "offset": 1.2},
        v0={"kind": "constant", "value": -2.0},
        obstacle={"lower": {"kind": "constant", "value": 0.0}},
        output={"stride": 10, "dir": "out/paper-fig1"},
    )
    double = ScenarioConfig(
        name="double-obstacle-demo",
        domain={"a": 0.0, "b": math.pi},
        n_cells=100,
        s=1.0,
        T=4.0,
        n_steps=400,
        bc={"left": 0.0, "right": 0.0},
        u0={"kind": "sine", "amplitude": 0.4, "frequency": 1.0, "phase": 0.0, "offset": 0.0},
        v0={"kind": "sine", "amplitude": 2.0, "frequency": 1.0, "phase": 0.0, "offset": 0.0},
        obstacle={
            "lower": {"kind": "constant", "value": -0.5},
            "upper": {"kind": "constant", "value": 0.6},
        },
        output={"stride": 5, "dir": "out/double-obstacle-demo"},
        experimental=True,
    )
    return {
        "paper-fig1": fig1,
        "free-sine": _free_sine("free-sine", 1.0),
        "fractional-free": _free_sine("fractional-free", 0.5),
        "double-obstacle-demo": double,
    }


PRESET_NAMES = tuple(_presets())


def preset(name: str) -> ScenarioConfig:
    presets = _presets()
    if name not in presets:
        raise UnknownPresetError(f"unknown preset {name!r}; valid presets: {', '.join(presets)}")
    return presets[name]


def exact_solution(cfg: ScenarioConfig):
    """Closed-form solution when the config is a free standing sine wave, else None.

    Covers s = 1, no obstacle, zero boundary data, u0 = A sin(k x) and v0 either
    zero or B sin(k x), with sin(k x) vanishing at both ends.
    """
    if cfg.s != 1.0 or cfg.obstacle or cfg.bc["left"] != 0 or cfg.bc["right"] != 0:
        return None
    u0, v0 = cfg.u0, cfg.v0
    if u0["kind"] != "sine" or u0["phase"] != 0 or u0["offset"] != 0:
        return None
    k, A = u0["frequency"], u0["amplitude"]
    a, b = cfg.domain["a"], cfg.domain["b"]
    if abs(math.sin(k * a)) > 1e-12 or abs(math.sin(k * b)) > 1e-12:
        return None
    if v0["kind"] == "constant" and v0["value"] == 0:
        B = 0.0
    elif v0["kind"] == "sine" and v0["frequency"] == k and v0["phase"] == 0 and v0["offset"] == 0:
        B = v0["amplitude"]
    else:
        return None
    return lambda t, x: np.sin(k * np.asarray(x)) * (A * np.cos(k * t) + B / k * np.sin(k * t))


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _json_ready(obj):
    # floats become marker strings so they can be written with 17 digits
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        if not math.isfinite(obj):
            return None
        return f"@@F{_fmt(obj)}@@"
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps_json(obj) -> str:
    text = json.dumps(_json_ready(obj), indent=2, sort_keys=False)
    return re.sub(r'"@@F([^@]*)@@"', r"\1", text) + "\n"


def write_outputs(
    record: TrajectoryRecord,
    report: StabilizationReport,
    out_dir,
    config: Optional[ScenarioConfig] = None,
    stride: int = 1,
) -> list:
    """Write energy.csv, snapshots.csv, contacts.csv, impacts.json and run_meta.json."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    t = record.times
    x = record.grid.nodes
    E = record.energies
    files = {}

    lines = ["t,E,kinetic,seminorm_sq"]
    for i in range(record.n_steps + 1):
        lines.append(",".join(_fmt(v) for v in (t[i], E[i], record.kinetic[i], record.seminorm_sq[i])))
    files["energy.csv"] = "\n".join(lines) + "\n"

    lines = ["t,x,u,v"]
    for i in range(0, record.n_steps + 1, stride):
        u, v, ti = record.snapshots[i + 1], record.velocities[i], _fmt(t[i])
        lines.extend(f"{ti},{_fmt(x[j])},{_fmt(u[j])},{_fmt(v[j])}" for j in range(x.size))
    files["snapshots.csv"] = "\n".join(lines) + "\n"

    lines = ["t,j_min,j_max"]
    for i, c in enumerate(record.contacts):
        if c.size:
            lines.append(f"{_fmt(t[i])},{int(c.min())},{int(c.max())}")
    files["contacts.csv"] = "\n".join(lines) + "\n"

    files["impacts.json"] = dumps_json(report.to_dict())
    meta = {
        "config": config.to_dict() if config is not None else None,
        "tau": record.tau,
        "h": record.grid.h,
        "stride": stride,
        "solver_iterations": int(record.iterations.sum()),
        "max_kkt_residual": [float(v) for v in record.residuals.max(axis=0)],
    }
    files["run_meta.json"] = dumps_json(meta)

    written = []
    for name, text in files.items():
        path = out / name
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc}") from exc
        written.append(path)
    return written
