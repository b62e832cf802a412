"""Reachability region: filtering, adaptive Brownian variance, and resampling."""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .mdp import GoalEnv

log = logging.getLogger(__name__)


@dataclass
class SamplerConfig:
    R_min: float = 0.3
    R_max: float = 0.9
    R_pref: float = 0.7
    k_sigma: float = 2.0
    delta_max: float = 0.5
    sigma_min: float = 0.1
    sigma_max: float = 1.0
    K: int = 5
    N_new: int = 135
    N_old: int = 65
    H_brownian: int = 40
    M_oversample: int = 5
    H_hist: int = 10
    rollout_budget: int | None = None
    merge_radius: float = 1e-3
    wave_size: int = 8
    # Also archive states filtered out as too easy (prose reading of the algorithm).
    archive_mastered: bool = False

    def __post_init__(self):
        if not (0 <= self.R_min < self.R_pref < self.R_max <= 1):
            raise ValueError("SamplerConfig: need 0 <= R_min < R_pref < R_max <= 1")
        if not (0 < self.sigma_min <= self.sigma_max):
            raise ValueError("SamplerConfig: need 0 < sigma_min <= sigma_max")
        for name in ("N_new", "N_old", "K", "M_oversample", "H_hist", "wave_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"SamplerConfig: {name} must be >= 1")
        if self.H_brownian < 0 or self.delta_max < 0 or self.merge_radius < 0:
            raise ValueError("SamplerConfig: H_brownian, delta_max, merge_radius must be >= 0")
        if self.rollout_budget is None:
            self.rollout_budget = 20 * self.N_new

    def clip_sigma(self, sigma: float) -> float:
        return float(min(max(sigma, self.sigma_min), self.sigma_max))


@dataclass
class RegionEntry:
    """A curriculum state.

    ``parent`` indexes the archive entry the state was reached from and
    ``actions`` is the Brownian action chain that reproduces ``state`` from
    ``archive[parent].state``. Archived entries carry ``archive_id``.
    """

    state: np.ndarray
    goal: np.ndarray
    history: deque
    parent: int | None = None
    actions: np.ndarray | None = None
    archive_id: int | None = None

    @property
    def mean_reward(self) -> float | None:
        return float(np.mean(self.history)) if self.history else None


@dataclass
class ReachabilityRegion:
    current: list = field(default_factory=list)
    archive: list = field(default_factory=list)
    H_hist: int = 10

    def new_history(self, values=()) -> deque:
        return deque(values, maxlen=self.H_hist)

    def absorb(self, entries) -> int:
        """``archive <- archive U entries``; returns the number of entries added."""
        added = 0
        for e in entries:
            if e.archive_id is not None:
                continue
            e.archive_id = len(self.archive)
            self.archive.append(
                RegionEntry(
                    state=e.state.copy(),
                    goal=e.goal.copy(),
                    history=self.new_history(e.history),
                    parent=e.parent,
                    actions=e.actions,
                    archive_id=e.archive_id,
                )
            )
            added += 1
        return added

    def archive_states(self) -> np.ndarray:
        return np.array([e.state for e in self.archive])


def make_region(env: GoalEnv, seed_state, H_hist: int = 10) -> ReachabilityRegion:
    s = env.check_state(seed_state)
    s = env.canonical_state(s[None])[0]
    region = ReachabilityRegion(H_hist=H_hist)
    g = env.state_to_goal(s)
    region.archive.append(RegionEntry(s.copy(), g.copy(), region.new_history([1]), archive_id=0))
    region.current.append(RegionEntry(s.copy(), g.copy(), region.new_history([1]), parent=0, archive_id=0))
    return region


def update_variance(sigma: float, r_avg: float, cfg: SamplerConfig) -> float:
    """Integral-style controller pulling the success ratio towards ``R_pref``."""
    if not 0.0 <= r_avg <= 1.0:
        raise ValueError(f"r_avg must lie in [0, 1], got {r_avg}")
    delta = min(max(cfg.k_sigma * (r_avg - cfg.R_pref), -cfg.delta_max), cfg.delta_max)
    return min(max(sigma + delta, cfg.sigma_min), cfg.sigma_max)


def in_band(entry: RegionEntry, cfg: SamplerConfig) -> bool:
    m = entry.mean_reward
    return m is not None and cfg.R_min <= m <= cfg.R_max


def filter_states(region: ReachabilityRegion, cfg: SamplerConfig) -> list:
    """Keep current entries of intermediate difficulty; replaces ``region.current``."""
    empty = sum(1 for e in region.current if not e.history)
    if empty:
        log.debug("filter_states: %d entries without outcomes dropped as too hard", empty)
    retained = [e for e in region.current if in_band(e, cfg)]
    region.current = retained
    return retained


def record_outcome(region: ReachabilityRegion, entry_index: int, success: bool) -> None:
    if not 0 <= entry_index < len(region.current):
        raise IndexError(f"entry index {entry_index} out of range for {len(region.current)} current entries")
    region.current[entry_index].history.append(1 if success else 0)


def brownian_rollouts(env: GoalEnv, starts: np.ndarray, sigma: float, horizon: int, rng: np.random.Generator):
    """Batched Gaussian random walks.

    Returns ``visited`` of shape ``(n, horizon, state_dim)`` and the raw
    (unclipped) ``actions`` of shape ``(n, horizon, action_dim)``.
    """
    n = len(starts)
    sd, ad = env.spec.state_dim, env.spec.action_dim
    actions = rng.normal(0.0, sigma, size=(n, horizon, ad))
    visited = np.empty((n, horizon, sd))
    s = np.asarray(starts, dtype=float)
    for t in range(horizon):
        s = env.dynamics(s, env.spec.clip_action(actions[:, t]))
        visited[:, t] = s
    return visited, actions


def brownian_rollout(env: GoalEnv, start: RegionEntry, sigma: float, horizon: int, rng: np.random.Generator):
    """Single rollout from ``start``; returns ``[(state, action_chain), ...]``."""
    try:
        s0 = env.check_state(start.state)
    except ValueError as exc:
        log.warning("brownian_rollout: start rejected by environment (%s); skipped", exc)
        return []
    if horizon == 0:
        return []
    visited, actions = brownian_rollouts(env, s0[None], sigma, horizon, rng)
    return [(visited[0, t].copy(), actions[0, : t + 1].copy()) for t in range(horizon)]


def replay(env: GoalEnv, state: np.ndarray, actions) -> np.ndarray:
    s = np.asarray(state, dtype=float)[None]
    for a in actions if actions is not None else ():
        s = env.dynamics(s, env.spec.clip_action(np.asarray(a)[None]))
    return s[0]


class _Pool:
    """Oversampled pool with merge-radius deduplication and provenance."""

    def __init__(self, state_dim: int, capacity: int, merge_radius: float):
        self.states = np.empty((max(capacity, 16), state_dim))
        self.parents: list = []
        self.chains: list = []
        self.archive_ids: list = []
        self.radius = merge_radius

    def __len__(self):
        return len(self.parents)

    def _grow(self):
        self.states = np.concatenate([self.states, np.empty_like(self.states)])

    def add(self, state, parent, chain, archive_id=None, dedup=True) -> bool:
        n = len(self)
        if dedup and n and self.radius > 0:
            d = np.linalg.norm(self.states[:n] - state, axis=1)
            if d.min() < self.radius:
                return False
        if n == len(self.states):
            self._grow()
        self.states[n] = state
        self.parents.append(parent)
        self.chains.append(chain)
        self.archive_ids.append(archive_id)
        return True


def _empty_chain(env):
    return np.zeros((0, env.spec.action_dim))


def resample_states(
    region: ReachabilityRegion,
    sigma: float,
    cfg: SamplerConfig,
    env: GoalEnv,
    rng: np.random.Generator,
) -> list:
    """Two-stage resampling; returns the new current set (``region`` is not modified)."""
    if not region.archive:
        raise ValueError("resample_states requires a non-empty archive")
    seeds = region.current if region.current else region.archive
    target = cfg.M_oversample * cfg.N_new
    pool = _Pool(env.spec.state_dim, target + cfg.H_brownian * cfg.wave_size, cfg.merge_radius)
    for e in seeds:
        if e.archive_id is not None:
            pool.add(e.state, e.archive_id, _empty_chain(env), e.archive_id, dedup=False)
        else:
            pool.add(e.state, e.parent, e.actions if e.actions is not None else _empty_chain(env), dedup=False)

    rollouts = 0
    while len(pool) < target and rollouts < cfg.rollout_budget and cfg.H_brownian > 0:
        n = min(cfg.wave_size, cfg.rollout_budget - rollouts)
        picks = rng.integers(0, len(pool), size=n)
        visited, actions = brownian_rollouts(env, pool.states[picks], sigma, cfg.H_brownian, rng)
        rollouts += n
        for j, p in enumerate(picks):
            base = pool.chains[p]
            parent = pool.parents[p]
            for t in range(cfg.H_brownian):
                pool.add(visited[j, t], parent, np.concatenate([base, actions[j, : t + 1]]))

    if len(pool) < cfg.N_new:
        log.warning(
            "region starvation: oversampled pool has %d states (< N_new=%d) after %d rollouts",
            len(pool),
            cfg.N_new,
            rollouts,
        )
        chosen = np.arange(len(pool))
    else:
        chosen = rng.choice(len(pool), size=cfg.N_new, replace=False)

    states = pool.states[chosen]
    goals = env.goals_of(states)
    new = [
        RegionEntry(
            state=states[k].copy(),
            goal=goals[k].copy(),
            history=region.new_history(),
            parent=pool.parents[i],
            actions=pool.chains[i],
            archive_id=pool.archive_ids[i],
        )
        for k, i in enumerate(chosen)
    ]
    n_old = min(cfg.N_old, len(region.archive))
    for i in rng.choice(len(region.archive), size=n_old, replace=False):
        a = region.archive[i]
        new.append(
            RegionEntry(a.state.copy(), a.goal.copy(), region.new_history(), int(i), _empty_chain(env), int(i))
        )
    return new


def snapshot_records(region: ReachabilityRegion, iteration: int) -> list:
    out = []
    for name, entries in (("current", region.current), ("archive", region.archive)):
        for e in entries:
            out.append(
                {
                    "set": name,
                    "state": [float(v) for v in e.state],
                    "goal": [float(v) for v in e.goal],
                    "mean_reward": e.mean_reward,
                    "parent": e.parent,
                    "iteration": int(iteration),
                }
            )
    return out


def write_snapshot(path, records, append: bool = True) -> None:
    with open(path, "a" if append else "w") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")
