"""JSON run configuration: parsing, validation and canonical echo.

Every section is a flat record; unknown keys and missing required keys are
rejected with the dotted path of the offending field (``problem.mu1``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional

from .grid import Grid, grid_with_spacing
from .potential import potential_from_dict, zero_set_from_dict
from .solver import GaussianAtMin, RandomPositive, SolverParams

MODES = (
    "solve",
    "scalar",
    "thresholds",
    "sweep",
    "flatwell",
    "limit_homogeneous",
    "limit_dirichlet",
    "selftest",
)

_MISSING = object()
_TOP_KEYS = {
    "mode", "seed", "max_parallel", "strict", "output_dir", "problem", "solver", "sweep", "limit", "component",
}


class ConfigError(ValueError):
    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path


class _Section:
    """Consumes keys from one JSON object and reports leftovers."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ConfigError(f"{path or 'config'} must be an object", path)
        self.data = dict(data)
        self.path = path

    def _full(self, key):
        return f"{self.path}.{key}" if self.path else key

    def get(self, key, kind=None, default=_MISSING):
        if key not in self.data:
            if default is _MISSING:
                raise ConfigError(f"missing required field {self._full(key)}", self._full(key))
            return default
        value = self.data.pop(key)
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if kind is int and isinstance(value, int) and not isinstance(value, bool):
            return value
        if kind is bool and isinstance(value, bool):
            return value
        if kind is str and isinstance(value, str):
            return value
        if kind in (list, dict) and isinstance(value, kind):
            return value
        if kind is None or (value is None and default is None):
            return value
        raise ConfigError(f"{self._full(key)} must be of type {kind.__name__}", self._full(key))

    def sub(self, key, required=True) -> Optional["_Section"]:
        raw = self.get(key, dict, _MISSING if required else None)
        return None if raw is None else _Section(raw, self._full(key))

    def done(self):
        if self.data:
            key = sorted(self.data)[0]
            raise ConfigError(f"unknown field {self._full(key)}", self._full(key))


def _potential(raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must be a tagged potential record", path)
    try:
        return potential_from_dict(raw)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"{path}: {exc}", path) from None


def _zero_set(raw, path):
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must be a tagged zero-set record", path)
    try:
        return zero_set_from_dict(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}", path) from None


def _grid(sec: _Section) -> Grid:
    dim = sec.get("dim", int)
    half_width = sec.get("half_width", float)
    n = sec.get("points_per_axis", int, None)
    spacing = sec.get("spacing", float, None)
    sec.done()
    if (n is None) == (spacing is None):
        raise ConfigError(f"{sec.path}: give exactly one of points_per_axis, spacing", sec.path)
    try:
        return Grid(dim, half_width, n) if n is not None else grid_with_spacing(dim, half_width, spacing)
    except ValueError as exc:
        raise ConfigError(f"{sec.path}: {exc}", sec.path) from None


@dataclass
class ProblemConfig:
    mu1: float
    mu2: float
    beta: float
    eps: float
    a: Any
    b: Any
    grid: Optional[Grid]


@dataclass
class SweepConfig:
    eps_list: list[float]
    box_half_width: Optional[float] = None
    spacing: Optional[float] = None
    gamma: Optional[float] = None
    center: Optional[list[float]] = None
    limit_half_width: Optional[float] = None
    limit_W: Any = None
    centers: Optional[list[list[float]]] = None
    W: Optional[list[Any]] = None
    leak_margin: Optional[float] = None


@dataclass
class RunConfig:
    mode: str
    seed: int
    max_parallel: int
    strict: bool
    output_dir: Optional[str]
    problem: Optional[ProblemConfig]
    solver: SolverParams
    component: str = "u"
    trace: bool = False
    sweep: Optional[SweepConfig] = None
    limit_W: Any = None
    limit_W_b: Any = None
    zero_set_a: Any = None
    zero_set_b: Any = None
    raw: dict = field(default_factory=dict, repr=False)


def _problem(sec: _Section, mode: str) -> ProblemConfig:
    need_coeff = mode not in ("limit_homogeneous", "limit_dirichlet")
    need_grid = mode not in ("sweep", "flatwell")
    mu1 = sec.get("mu1", float)
    mu2 = sec.get("mu2", float)
    beta = sec.get("beta", float)
    eps = sec.get("eps", float, 1.0)
    a = sec.get("a", dict, _MISSING if need_coeff else None)
    b = sec.get("b", dict, _MISSING if need_coeff else None)
    gsec = sec.sub("grid", required=need_grid)
    grid = _grid(gsec) if gsec is not None else None
    sec.done()
    a = _potential(a, f"{sec.path}.a") if a is not None else None
    b = _potential(b, f"{sec.path}.b") if b is not None else None
    return ProblemConfig(mu1, mu2, beta, eps, a, b, grid)


def _solver(sec: Optional[_Section], seed: int) -> tuple[SolverParams, bool]:
    if sec is None:
        return SolverParams(seed=seed), False
    kw = {}
    for key, kind in (
        ("dt", float),
        ("max_iters", int),
        ("tol_residual", float),
        ("tol_energy", float),
        ("restarts", int),
        ("init_width", float),
        ("safety", float),
    ):
        value = sec.get(key, kind, None)
        if value is not None:
            kw[key] = value
    amps = sec.get("amplitudes", list, None)
    if amps is not None:
        if len(amps) != 2 or not all(isinstance(x, (int, float)) for x in amps):
            raise ConfigError(f"{sec.path}.amplitudes must be two numbers", f"{sec.path}.amplitudes")
        kw["amplitudes"] = (float(amps[0]), float(amps[1]))
    init = sec.get("init", str, "gaussian_at_min")
    if init == "gaussian_at_min":
        kw["init"] = GaussianAtMin()
    elif init == "random_positive":
        kw["init"] = RandomPositive(seed)
    else:
        raise ConfigError(f"{sec.path}.init must be gaussian_at_min or random_positive", f"{sec.path}.init")
    trace = sec.get("trace", bool, False)
    sec.done()
    return SolverParams(seed=seed, **kw), trace


def _float_list(raw, path) -> list[float]:
    if not isinstance(raw, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in raw):
        raise ConfigError(f"{path} must be a list of numbers", path)
    return [float(x) for x in raw]


def _sweep(sec: _Section, mode: str) -> SweepConfig:
    eps_list = _float_list(sec.get("eps_list", list), f"{sec.path}.eps_list")
    cfg = SweepConfig(eps_list=eps_list)
    cfg.box_half_width = sec.get("box_half_width", float, None)
    cfg.spacing = sec.get("spacing", float, None)
    cfg.gamma = sec.get("gamma", float, None)
    center = sec.get("center", list, None)
    cfg.center = None if center is None else _float_list(center, f"{sec.path}.center")
    cfg.limit_half_width = sec.get("limit_half_width", float, None)
    W = sec.get("limit_W", dict, None)
    cfg.limit_W = None if W is None else _potential(W, f"{sec.path}.limit_W")
    centers = sec.get("centers", list, None)
    if centers is not None:
        cfg.centers = [_float_list(c, f"{sec.path}.centers[{i}]") for i, c in enumerate(centers)]
    Ws = sec.get("W", list, None)
    if Ws is not None:
        cfg.W = [_potential(w, f"{sec.path}.W[{i}]") for i, w in enumerate(Ws)]
    cfg.leak_margin = sec.get("leak_margin", float, None)
    sec.done()
    if mode == "flatwell":
        for key in ("box_half_width", "spacing"):
            if getattr(cfg, key) is None:
                raise ConfigError(f"missing required field {sec.path}.{key}", f"{sec.path}.{key}")
    if (cfg.centers is None) != (cfg.W is None):
        raise ConfigError(f"{sec.path}: centers and W must be given together", sec.path)
    if cfg.centers is not None and len(cfg.centers) != len(cfg.W):
        raise ConfigError(f"{sec.path}: centers and W differ in length", sec.path)
    return cfg


def parse_config(data: dict, seed_override: Optional[int] = None) -> RunConfig:
    """Validate a decoded JSON config; no computation happens here."""
    top = _Section(data, "")
    unknown = sorted(set(top.data) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown field {unknown[0]}", unknown[0])
    mode = top.get("mode", str)
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {', '.join(MODES)}", "mode")
    seed = top.get("seed", int, 0)
    if seed_override is not None:
        seed = seed_override
    max_parallel = top.get("max_parallel", int, 1)
    strict = top.get("strict", bool, False)
    output_dir = top.get("output_dir", str, None)
    if mode == "selftest":
        for key in ("problem", "solver", "sweep", "limit", "component"):
            top.get(key, None, None)
        top.done()
        return RunConfig(mode, seed, max_parallel, strict, output_dir, None, SolverParams(seed=seed), raw=data)

    problem = _problem(top.sub("problem"), mode)
    solver, trace = _solver(top.sub("solver", required=False), seed)
    cfg = RunConfig(mode, seed, max_parallel, strict, output_dir, problem, solver, trace=trace, raw=data)
    cfg.component = top.get("component", str, "u")
    if cfg.component not in ("u", "v"):
        raise ConfigError("component must be 'u' or 'v'", "component")
    if mode in ("sweep", "flatwell"):
        cfg.sweep = _sweep(top.sub("sweep"), mode)
    if mode in ("limit_homogeneous", "limit_dirichlet"):
        lim = top.sub("limit")
        if mode == "limit_homogeneous":
            cfg.limit_W = _potential(lim.get("W", dict), "limit.W")
            W_b = lim.get("W_b", dict, None)
            cfg.limit_W_b = None if W_b is None else _potential(W_b, "limit.W_b")
        else:
            cfg.zero_set_a = _zero_set(lim.get("zero_set_a", dict), "limit.zero_set_a")
            cfg.zero_set_b = _zero_set(lim.get("zero_set_b", dict), "limit.zero_set_b")
        lim.done()
    top.done()
    if max_parallel < 1:
        raise ConfigError("max_parallel must be >= 1", "max_parallel")
    return cfg


def load_config(path, seed_override: Optional[int] = None) -> RunConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}", "") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc.msg} at line {exc.lineno}", "") from None
    return parse_config(data, seed_override)


def env_seed() -> Optional[int]:
    raw = os.environ.get("GPE_SEED")
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"GPE_SEED must be an integer, got {raw!r}", "GPE_SEED") from None


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def effective_config(cfg: RunConfig) -> dict:
    """The raw config with the resolved seed, suitable for re-running."""
    out = json.loads(json.dumps(cfg.raw))
    out["seed"] = cfg.seed
    return out
