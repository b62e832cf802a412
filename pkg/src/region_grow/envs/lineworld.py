"""One-dimensional oracle world with exactly computable reachability."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import EnvSpec, GoalEnv


@dataclass
class LineWorldConfig:
    x_min: float = -80.0
    x_max: float = 80.0
    max_step: float = 4.0
    epsilon: float = 1.5
    T: int = 60
    step_penalty: float = -0.01
    seed_state: tuple = (0.0,)

    def __post_init__(self):
        if not self.x_min < self.x_max:
            raise ValueError("LineWorldConfig: x_min must be < x_max")
        if not self.max_step > 0:
            raise ValueError("LineWorldConfig: max_step must be > 0")
        if not 0 < self.epsilon < self.x_max - self.x_min:
            raise ValueError("LineWorldConfig: need 0 < epsilon < x_max - x_min")
        if self.T < 1:
            raise ValueError("LineWorldConfig: T must be >= 1")


class LineWorld(GoalEnv):
    """``x' = clip(x + clip(a, +-max_step), x_min, x_max)``; success iff ``|x' - g| <= epsilon``."""

    name = "lineworld"

    def __init__(self, config: LineWorldConfig | None = None):
        super().__init__()
        self.config = cfg = config or LineWorldConfig()
        self.spec = EnvSpec(
            state_dim=1,
            goal_dim=1,
            action_dim=1,
            action_low=np.array([-cfg.max_step]),
            action_high=np.array([cfg.max_step]),
            horizon=cfg.T,
            step_penalty=cfg.step_penalty,
            state_low=np.array([cfg.x_min]),
            state_high=np.array([cfg.x_max]),
            goal_low=np.array([cfg.x_min]),
            goal_high=np.array([cfg.x_max]),
        )

    def dynamics(self, states, actions):
        cfg = self.config
        a = np.clip(actions, -cfg.max_step, cfg.max_step)
        return np.clip(states + a, cfg.x_min, cfg.x_max)

    def goals_of(self, states):
        return np.array(states, dtype=float, copy=True)

    def success_mask(self, states, goals):
        return np.abs(states[:, 0] - goals[:, 0]) <= self.config.epsilon

    def valid_mask(self, states):
        x = states[:, 0]
        return np.isfinite(x) & (x >= self.config.x_min) & (x <= self.config.x_max)

    def sample_states(self, rng, n):
        return rng.uniform(self.config.x_min, self.config.x_max, size=(n, 1))

    def default_seed_state(self):
        return np.array(self.config.seed_state, dtype=float)

    def steps_between(self, x1: float, x2: float) -> int:
        """Minimum number of actions to move from ``x1`` to ``x2``."""
        return int(np.ceil(abs(x2 - x1) / self.config.max_step - 1e-12))
