"""Goal-conditioned MDP contract shared by every environment.

Environments expose two layers:

* vectorized pure functions over ``(n, dim)`` arrays (``dynamics``,
  ``success_mask``, ``goals_of``, ``valid_mask``, ``sample_states``), used by
  batched rollout collection and Brownian exploration;
* a stateful single-instance API (``set_state`` / ``set_goal`` / ``step``)
  built on top of the vectorized layer, so both paths produce identical
  transitions.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np


class EnvError(ValueError):
    """Raised on contract violations (bad state, stepping a finished episode)."""


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    goal_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    horizon: int
    step_penalty: float = -0.01
    # Box used to normalize policy inputs; not a validity constraint.
    state_low: np.ndarray | None = None
    state_high: np.ndarray | None = None
    goal_low: np.ndarray | None = None
    goal_high: np.ndarray | None = None

    def __post_init__(self):
        for name in ("state_dim", "goal_dim", "action_dim", "horizon"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        low = np.asarray(self.action_low, dtype=float)
        high = np.asarray(self.action_high, dtype=float)
        if low.shape != (self.action_dim,) or high.shape != (self.action_dim,):
            raise ValueError("action bounds must have shape (action_dim,)")
        if not np.all(low < high):
            raise ValueError("action_low must be strictly below action_high")
        if self.step_penalty > 0:
            raise ValueError("step_penalty must be <= 0")
        object.__setattr__(self, "action_low", low)
        object.__setattr__(self, "action_high", high)

    def clip_action(self, a: np.ndarray) -> np.ndarray:
        return np.clip(a, self.action_low, self.action_high)


@dataclass
class StepOutcome:
    next_state: np.ndarray
    reward: float
    success: bool
    done: bool


@dataclass
class Trajectory:
    """One episode. ``states[t]`` is the state the action ``actions[t]`` was taken in."""

    start: np.ndarray
    goal: np.ndarray
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    success: bool
    final_state: np.ndarray | None = None
    log_probs: np.ndarray | None = None

    @property
    def length(self) -> int:
        return len(self.rewards)

    @property
    def steps(self):
        return list(zip(self.states, self.actions, self.rewards))


class GoalEnv:
    """Base class; subclasses set ``spec`` and fill in the vectorized layer."""

    name = "base"
    spec: EnvSpec

    def __init__(self):
        self._state: np.ndarray | None = None
        self._goal: np.ndarray | None = None
        self._t = 0
        self._done = False

    # -- vectorized layer -------------------------------------------------
    def dynamics(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def goals_of(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def success_mask(self, states: np.ndarray, goals: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def valid_mask(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_states(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Uniform zero-velocity valid states."""
        raise NotImplementedError

    def canonical_state(self, states: np.ndarray) -> np.ndarray:
        """Map states onto their canonical representative (e.g. wrapped angles)."""
        return states

    def default_seed_state(self) -> np.ndarray:
        raise NotImplementedError

    # -- single-instance API ----------------------------------------------
    def check_state(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape != (self.spec.state_dim,):
            raise EnvError(
                f"{self.name}: state must have shape ({self.spec.state_dim},), got {s.shape}"
            )
        if not np.all(np.isfinite(s)):
            raise EnvError(f"{self.name}: state has non-finite entries: {s}")
        if not self.valid_mask(s[None])[0]:
            raise EnvError(f"{self.name}: state {s.tolist()} is outside the environment bounds")
        return s

    def check_goal(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if g.shape != (self.spec.goal_dim,):
            raise EnvError(
                f"{self.name}: goal must have shape ({self.spec.goal_dim},), got {g.shape}"
            )
        return g

    def set_state(self, s) -> None:
        self._state = self.canonical_state(self.check_state(s)[None])[0].copy()
        self._t = 0
        self._done = False

    def set_goal(self, g) -> None:
        self._goal = self.check_goal(g).copy()

    def reset(self, start, goal) -> np.ndarray:
        self.set_state(start)
        self.set_goal(goal)
        return self.observe()

    def observe(self) -> np.ndarray:
        if self._state is None:
            raise EnvError(f"{self.name}: no current state; call set_state first")
        return self._state.copy()

    def step(self, a) -> StepOutcome:
        if self._state is None:
            raise EnvError(f"{self.name}: no current state; call set_state first")
        if self._done:
            raise EnvError(f"{self.name}: step called after episode end without reset")
        a = self.spec.clip_action(np.asarray(a, dtype=float).reshape(self.spec.action_dim))
        nxt = self.dynamics(self._state[None], a[None])[0]
        self._state = nxt
        self._t += 1
        success = False
        if self._goal is not None:
            success = bool(self.success_mask(nxt[None], self._goal[None])[0])
        self._done = success or self._t >= self.spec.horizon
        reward = self.spec.step_penalty + (1.0 if success else 0.0)
        return StepOutcome(nxt.copy(), reward, success, self._done)

    def state_to_goal(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        if s.shape != (self.spec.state_dim,):
            raise EnvError(f"{self.name}: state must have shape ({self.spec.state_dim},)")
        return self.goals_of(s[None])[0]

    def is_success(self, s, g) -> bool:
        s = np.asarray(s, dtype=float)
        g = self.check_goal(g)
        return bool(self.success_mask(s[None], g[None])[0])

    def sample_eval_pair(self, rng: np.random.Generator):
        start = self.sample_states(rng, 1)[0]
        goal = self.goals_of(self.sample_states(rng, 1))[0]
        return start, goal

    def sample_eval_pairs(self, rng: np.random.Generator, n: int):
        """Vectorized ``sample_eval_pair``; draw order matches n sequential calls."""
        starts = np.empty((n, self.spec.state_dim))
        goals = np.empty((n, self.spec.goal_dim))
        for i in range(n):
            starts[i], goals[i] = self.sample_eval_pair(rng)
        return starts, goals

    def clone(self) -> "GoalEnv":
        return copy.deepcopy(self)
