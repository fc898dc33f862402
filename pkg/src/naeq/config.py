"""Scenario configs: JSON parsing, validation and game construction.

Schema (top-level keys)::

    task      one of TASKS
    game      {"kind": ..., parameters}; see GAME_KINDS
    solver    optional SolverSettings / NaeSettings overrides
    seed      integer, required for stochastic tasks
    output    output directory (default "out")
    workers   sweep worker count (default 1)
    alphas    solve-alpha-eq: list of bias profiles, or
    alpha_grid  list of per-firm bias values crossed over firms
    nae       solve-nae / verify / sweep: {"method": "generic"|"closed-form"}
    microfound, dynamics   simulation blocks
    sweep     {"task": ..., "grid": {name: [values]}, "outputs": {file: [columns]}}

Sweep grid names are dotted paths (``game.c``); a bare name refers to the
game block.
"""

from __future__ import annotations

import copy
import hashlib
import itertools
import json
from dataclasses import dataclass, fields
from pathlib import Path

from .equilibrium import SolverSettings
from .errors import ConfigError, NaeqError
from .game import GameSpec
from .markets import (
    AdvertisingMarket,
    LinearPriceMarket,
    TeamProductionSpec,
    circle_game,
    motivating_example,
)
from .nae import NaeSettings

TASKS = ("solve-alpha-eq", "solve-nae", "audit", "verify", "merger",
         "simulate-microfound", "simulate-dynamics", "sweep")
STOCHASTIC = ("simulate-microfound", "simulate-dynamics")
TOP_KEYS = {"task", "game", "solver", "seed", "output", "workers", "alphas", "alpha_grid", "nae",
            "microfound", "dynamics", "sweep", "name"}
GAME_KINDS = {
    "motivating-example": set(),
    "linear-price": {"a", "b", "c", "w"},
    "duopoly": {"a", "b_tilde", "c_tilde"},
    "symmetric-price": {"n", "a", "b", "c"},
    "advertising": {"a", "b", "c", "p"},
    "team-production": {"n", "theta", "gamma"},
    "circle": {"eps", "intercept"},
}


@dataclass(frozen=True)
class ScenarioConfig:
    raw: dict
    task: str
    seed: int | None
    output: str
    workers: int
    sha256: str

    @property
    def game_block(self) -> dict:
        return self.raw.get("game", {})


def parse(text: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", line=1)
    return data


def load(path: str | Path, seed: int | None = None, output: str | None = None,
         workers: int | None = None) -> ScenarioConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return validate(parse(text), seed=seed, output=output, workers=workers)


def digest(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()


def validate(raw: dict, seed: int | None = None, output: str | None = None,
             workers: int | None = None) -> ScenarioConfig:
    """Check the whole config, including every sweep point, before anything runs."""
    raw = copy.deepcopy(raw)
    if seed is not None:
        raw["seed"] = seed
    if output is not None:
        raw["output"] = output
    if workers is not None:
        raw["workers"] = workers
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown keys {sorted(unknown)}", field=sorted(unknown)[0])
    task = raw.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}", field="task")
    inner_task = raw["sweep"].get("task") if task == "sweep" and isinstance(raw.get("sweep"), dict) else task
    if "game" not in raw and inner_task != "simulate-microfound":
        raise ConfigError("missing game block", field="game")
    w = raw.get("workers", 1)
    if not isinstance(w, int) or w < 1:
        raise ConfigError("workers must be a positive integer", field="workers")
    s = raw.get("seed")
    if s is not None and (not isinstance(s, int) or isinstance(s, bool) or s < 0 or s >= 2 ** 64):
        raise ConfigError("seed must be an integer in [0, 2^64)", field="seed")
    if inner_task in STOCHASTIC and s is None:
        raise ConfigError("stochastic task needs a seed", field="seed")
    solver_settings(raw)
    if task == "sweep":
        for point in sweep_points(raw):
            _validate_point(point, field_prefix="sweep")
    else:
        _validate_point(raw)
    return ScenarioConfig(raw, task, s, str(raw.get("output", "out")), w, digest(raw))


def _validate_point(raw: dict, field_prefix: str = "") -> None:
    task = raw["task"]
    try:
        if task != "simulate-microfound":
            build_game(raw["game"])
        if task == "solve-alpha-eq":
            alpha_profiles(raw)
        if task == "merger":
            g = raw["game"]
            if g.get("kind") != "symmetric-price" or g.get("n") != 3:
                raise ConfigError("merger needs a symmetric-price game with n = 3", field="game.kind")
            from .merger import MergerScenario
            MergerScenario(g["a"], g["b"], g["c"])
        if task == "simulate-microfound":
            from .runner import microfound_spec
            microfound_spec(raw)
        if task == "simulate-dynamics":
            from .runner import dynamics_spec
            dynamics_spec(raw)
    except ConfigError:
        raise
    except (NaeqError, TypeError, KeyError, ValueError) as exc:
        where = field_prefix or "game"
        raise ConfigError(f"invalid parameters: {exc}", field=where) from exc


def build_game(block: dict) -> GameSpec:
    if not isinstance(block, dict):
        raise ConfigError("game must be an object", field="game")
    kind = block.get("kind")
    if kind not in GAME_KINDS:
        raise ConfigError(f"game kind must be one of {sorted(GAME_KINDS)}", field="game.kind")
    params = {k: v for k, v in block.items() if k != "kind"}
    extra = set(params) - GAME_KINDS[kind]
    if extra:
        raise ConfigError(f"unknown parameters {sorted(extra)} for {kind}", field=f"game.{sorted(extra)[0]}")
    return market(block).game() if kind != "circle" else circle_game(**params)


def market(block: dict):
    """Market object behind a game block (the circle game has none)."""
    kind = block["kind"]
    p = {k: v for k, v in block.items() if k != "kind"}
    if kind == "motivating-example":
        return motivating_example()
    if kind == "linear-price":
        return LinearPriceMarket(p["a"], p["b"], p["c"], p.get("w"))
    if kind == "duopoly":
        return LinearPriceMarket.from_duopoly(p["a"], p["b_tilde"], p["c_tilde"])
    if kind == "symmetric-price":
        n = p["n"]
        if not isinstance(n, int) or n < 1:
            raise ConfigError("n must be a positive integer", field="game.n")
        return LinearPriceMarket.symmetric(n, p["a"], p["b"], p["c"])
    if kind == "advertising":
        return AdvertisingMarket(p["a"], p["b"], p["c"], p["p"])
    if kind == "team-production":
        return TeamProductionSpec(**p)
    raise ConfigError(f"game kind {kind!r} has no market object", field="game.kind")


def solver_settings(raw: dict) -> tuple[SolverSettings, NaeSettings]:
    block = raw.get("solver", {})
    if not isinstance(block, dict):
        raise ConfigError("solver must be an object", field="solver")
    inner_names = {f.name for f in fields(SolverSettings)}
    outer_names = {f.name for f in fields(NaeSettings)} - {"inner"}
    unknown = set(block) - inner_names - outer_names - {"inner"}
    if unknown:
        raise ConfigError(f"unknown solver settings {sorted(unknown)}", field=f"solver.{sorted(unknown)[0]}")
    try:
        inner = SolverSettings(**{k: v for k, v in block.items() if k in inner_names and k not in outer_names})
        nested = block.get("inner", {})
        nae_inner = SolverSettings(**{"tol": 1e-11, **nested})
        outer = NaeSettings(**{k: (tuple(v) if isinstance(v, list) else v)
                               for k, v in block.items() if k in outer_names}, inner=nae_inner)
    except (TypeError, NaeqError) as exc:
        raise ConfigError(f"invalid solver settings: {exc}", field="solver") from exc
    return inner, outer


def alpha_profiles(raw: dict) -> list[tuple[float, ...]]:
    n = build_game(raw["game"]).n
    if "alphas" in raw:
        profiles = [tuple(float(a) for a in p) for p in raw["alphas"]]
        field = "alphas"
    elif "alpha_grid" in raw:
        grid = [float(a) for a in raw["alpha_grid"]]
        profiles = list(itertools.product(grid, repeat=n))
        field = "alpha_grid"
    else:
        raise ConfigError("solve-alpha-eq needs alphas or alpha_grid", field="alphas")
    if not profiles:
        raise ConfigError("no bias profiles given", field=field)
    for p in profiles:
        if len(p) != n or any(not a > 0 for a in p):
            raise ConfigError(f"bias profile {p} needs {n} positive entries", field=field)
    return profiles


def _set_path(raw: dict, name: str, value) -> None:
    path = name.split(".") if "." in name else ["game", name]
    node = raw
    for key in path[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {name}", field=f"sweep.grid.{name}")
    node[path[-1]] = value


def sweep_points(raw: dict) -> list[dict]:
    """One concrete config per grid point, in row-major grid order."""
    block = raw.get("sweep")
    if not isinstance(block, dict):
        raise ConfigError("sweep task needs a sweep block", field="sweep")
    unknown = set(block) - {"task", "grid", "outputs"}
    if unknown:
        raise ConfigError(f"unknown sweep keys {sorted(unknown)}", field=f"sweep.{sorted(unknown)[0]}")
    inner = block.get("task")
    if inner not in TASKS or inner == "sweep":
        raise ConfigError("sweep.task must name a non-sweep task", field="sweep.task")
    grid = block.get("grid")
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("sweep grid must map parameter names to value lists", field="sweep.grid")
    if len(grid) > 2:
        raise ConfigError("sweep grids cover one or two parameters", field="sweep.grid")
    for name, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep grid values must be a non-empty list", field=f"sweep.grid.{name}")
    names = list(grid)
    points = []
    for combo in itertools.product(*(grid[k] for k in names)):
        point = {k: copy.deepcopy(v) for k, v in raw.items() if k not in ("sweep", "task")}
        point["task"] = inner
        for name, value in zip(names, combo):
            _set_path(point, name, value)
        point["_grid"] = dict(zip(names, combo))
        points.append(point)
    return points
