"""Concrete environments and a name registry used by configs."""

from __future__ import annotations

import dataclasses

from ..mdp import GoalEnv, StepOutcome
from .lineworld import LineWorld, LineWorldConfig
from .maze import Maze, MazeConfig, corridor_walls, outer_walls
from .reacher import ReacherConfig, SparseReacher, reacher_fk, wrap_angle

ENV_NAMES = ("lineworld", "reacher", "maze", "maze_open")
DEFAULT_ITERATIONS = {"lineworld": 200, "reacher": 300, "maze": 500, "maze_open": 500}

_CONFIGS = {
    "lineworld": LineWorldConfig,
    "reacher": ReacherConfig,
    "maze": MazeConfig,
    "maze_open": MazeConfig,
}


def make_env_config(name: str, overrides: dict | None = None):
    if name not in _CONFIGS:
        raise ValueError(f"unknown environment {name!r}; expected one of {ENV_NAMES}")
    overrides = dict(overrides or {})
    cls = _CONFIGS[name]
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown {name} config keys: {sorted(unknown)}")
    for k, v in list(overrides.items()):
        if isinstance(v, list) and k != "walls":
            overrides[k] = tuple(v)
    if name == "maze_open":
        return MazeConfig.open_table(**overrides)
    return cls(**overrides)


def make_env(name: str, overrides: dict | None = None) -> GoalEnv:
    cfg = make_env_config(name, overrides)
    if name == "lineworld":
        return LineWorld(cfg)
    if name == "reacher":
        return SparseReacher(cfg)
    env = Maze(cfg)
    env.name = name
    return env


def _one_step(env: GoalEnv, state, action, goal) -> StepOutcome:
    env.set_state(state)
    if goal is not None:
        env.set_goal(goal)
    return env.step(action)


def lineworld_step(state, action, cfg: LineWorldConfig | None = None, goal=None) -> StepOutcome:
    return _one_step(LineWorld(cfg), state, action, goal)


def reacher_step(state, action, cfg: ReacherConfig | None = None, goal=None) -> StepOutcome:
    return _one_step(SparseReacher(cfg), state, action, goal)


def maze_step(state, action, cfg: MazeConfig | None = None, goal=None) -> StepOutcome:
    return _one_step(Maze(cfg), state, action, goal)


__all__ = [
    "ENV_NAMES",
    "DEFAULT_ITERATIONS",
    "LineWorld",
    "LineWorldConfig",
    "Maze",
    "MazeConfig",
    "ReacherConfig",
    "SparseReacher",
    "corridor_walls",
    "outer_walls",
    "lineworld_step",
    "maze_step",
    "make_env",
    "make_env_config",
    "reacher_fk",
    "reacher_step",
    "wrap_angle",
]
