"""Planar cube-pushing maze.

The cube is modelled as an axis-aligned square sliding on a table with
Coulomb friction. An action is a force impulse; the environment then lets the
cube slide in fixed substeps until it settles, so one logical step has a
variable physical duration.

Within a substep the motion is integrated exactly: constant deceleration
``friction_coeff * gravity`` along the velocity, straight-line travel, and
wall contacts located analytically. A contact zeroes the normal velocity
component and the cube keeps sliding along the wall. Walls are segments;
the cube centre is kept outside each segment inflated by ``h_cube / 2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..mdp import EnvSpec, GoalEnv

_TOL = 1e-9
_MAX_EVENTS = 8


def outer_walls(h_table: float) -> list[list[float]]:
    h = h_table
    return [[0.0, 0.0, h, 0.0], [h, 0.0, h, h], [h, h, 0.0, h], [0.0, h, 0.0, 0.0]]


def corridor_walls(h_table: float) -> list[list[float]]:
    """Outer boundary plus a dead-end corridor running from the middle to the right wall."""
    h = h_table
    return outer_walls(h) + [[0.3 * h, 0.4 * h, h, 0.4 * h], [0.3 * h, 0.6 * h, h, 0.6 * h]]


@dataclass
class MazeConfig:
    h_table: float = 1.0
    h_cube: float = 0.1
    walls: list | None = None
    epsilon: float = 0.05
    friction_coeff: float = 0.3
    gravity: float = 9.81
    # velocity gained per unit force (push duration / cube mass), m/s per N
    impulse_gain: float = 0.5
    force_limit: float = 1.0
    settle_speed: float = 0.02
    substep_dt: float = 0.02
    max_substeps: int = 50
    speed_limit: float = 10.0
    T: int = 100
    step_penalty: float = -0.01
    seed_state: tuple = (0.9, 0.5, 0.0, 0.0)
    rects: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.walls is None:
            self.walls = corridor_walls(self.h_table)
        if not (self.h_table > 0 and 0 < self.h_cube < self.h_table):
            raise ValueError("MazeConfig: need 0 < h_cube < h_table")
        if not (self.epsilon > 0 and self.settle_speed > 0):
            raise ValueError("MazeConfig: epsilon and settle_speed must be > 0")
        if self.friction_coeff < 0 or self.substep_dt <= 0 or self.max_substeps < 1 or self.T < 1:
            raise ValueError("MazeConfig: invalid friction, substep_dt, max_substeps or T")
        walls = np.asarray(self.walls, dtype=float).reshape(-1, 4)
        if np.any((walls[:, 0] != walls[:, 2]) & (walls[:, 1] != walls[:, 3])):
            raise ValueError("MazeConfig: walls must be axis-aligned segments [x1, y1, x2, y2]")
        _check_enclosed(walls, self.h_table)
        r = self.h_cube / 2
        self.rects = np.stack(
            [
                np.minimum(walls[:, 0], walls[:, 2]) - r,
                np.minimum(walls[:, 1], walls[:, 3]) - r,
                np.maximum(walls[:, 0], walls[:, 2]) + r,
                np.maximum(walls[:, 1], walls[:, 3]) + r,
            ],
            axis=1,
        )

    @property
    def deceleration(self) -> float:
        return self.friction_coeff * self.gravity

    @classmethod
    def open_table(cls, **kw) -> "MazeConfig":
        """Point-mass variant without inner walls, seeded at the table centre."""
        h = kw.get("h_table", 1.0)
        kw.setdefault("walls", outer_walls(h))
        kw.setdefault("seed_state", (h / 2, h / 2, 0.0, 0.0))
        return cls(**kw)


def _check_enclosed(walls: np.ndarray, h: float) -> None:
    edges = [(1, 0.0, 0), (1, h, 0), (0, 0.0, 1), (0, h, 1)]  # (fixed axis, value, free axis)
    for fixed, value, free in edges:
        on = walls[(walls[:, fixed] == value) & (walls[:, fixed + 2] == value)]
        spans = sorted((min(w[free], w[free + 2]), max(w[free], w[free + 2])) for w in on)
        reach = 0.0
        for lo, hi in spans:
            if lo > reach + 1e-12:
                break
            reach = max(reach, hi)
        if reach < h - 1e-12:
            raise ValueError("MazeConfig: walls must enclose the table boundary")


class Maze(GoalEnv):
    """State ``(x, y, vx, vy)`` of the cube centre; goal is ``(x, y)``."""

    name = "maze"

    def __init__(self, config: MazeConfig | None = None):
        super().__init__()
        self.config = cfg = config or MazeConfig()
        h = cfg.h_table
        self.spec = EnvSpec(
            state_dim=4,
            goal_dim=2,
            action_dim=2,
            action_low=np.full(2, -cfg.force_limit),
            action_high=np.full(2, cfg.force_limit),
            horizon=cfg.T,
            step_penalty=cfg.step_penalty,
            state_low=np.array([0.0, 0.0, -1.0, -1.0]),
            state_high=np.array([h, h, 1.0, 1.0]),
            goal_low=np.zeros(2),
            goal_high=np.full(2, h),
        )
        self.last_substeps: np.ndarray | None = None

    # -- geometry ----------------------------------------------------------
    def inside_walls(self, pos: np.ndarray) -> np.ndarray:
        """True where the centre lies strictly inside an inflated wall."""
        lo = self.config.rects[None, :, :2]
        hi = self.config.rects[None, :, 2:]
        p = pos[:, None, :]
        return np.any(np.all((p > lo + _TOL) & (p < hi - _TOL), axis=2), axis=1)

    def in_free_space(self, pos: np.ndarray) -> np.ndarray:
        cfg = self.config
        r = cfg.h_cube / 2
        box = np.all((pos >= r - _TOL) & (pos <= cfg.h_table - r + _TOL), axis=1)
        return box & ~self.inside_walls(pos)

    def _first_hit(self, p, d, length):
        """Distance along unit ray ``d`` to the first inflated wall (inf if beyond ``length``)."""
        lo = self.config.rects[None, :, :2]
        hi = self.config.rects[None, :, 2:]
        P = p[:, None, :]
        D = d[:, None, :]
        parallel = np.abs(D) < 1e-12
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - P) / D
            t2 = (hi - P) / D
        inside = (P > lo + _TOL) & (P < hi - _TOL)
        tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
        tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
        t_enter = tmin.max(axis=2)
        axis = tmin.argmax(axis=2)
        t_exit = tmax.min(axis=2)
        ok = (t_enter < t_exit - _TOL) & (t_enter >= -_TOL) & (t_exit > _TOL)
        t_enter = np.where(ok, np.maximum(t_enter, 0.0), np.inf)
        best = np.argmin(t_enter, axis=1)
        rows = np.arange(len(p))
        lam = t_enter[rows, best]
        hit_axis = axis[rows, best]
        going_up = d[rows, hit_axis] > 0
        face = np.where(
            going_up,
            self.config.rects[best, hit_axis],
            self.config.rects[best, hit_axis + 2],
        )
        hit = lam < length
        return hit, lam, hit_axis, face

    def _advance(self, pos, vel, t_avail):
        """Slide for up to ``t_avail`` seconds (inf = until rest), resolving contacts exactly."""
        a = self.config.deceleration
        pos = pos.copy()
        vel = vel.copy()
        t_left = np.array(t_avail, dtype=float, copy=True)
        for _ in range(_MAX_EVENTS):
            u = np.hypot(vel[:, 0], vel[:, 1])
            idx = np.flatnonzero((u > 0) & (t_left > 0))
            if idx.size == 0:
                break
            p, v, uu, tl = pos[idx], vel[idx], u[idx], t_left[idx]
            d = v / uu[:, None]
            t_stop = uu / a if a > 0 else np.full_like(uu, np.inf)
            t_eff = np.minimum(tl, t_stop)
            length = uu * t_eff - 0.5 * a * t_eff**2
            hit, lam, axis, face = self._first_hit(p, d, length)

            miss = ~hit
            stopped = miss & (t_stop <= tl)
            p[miss] += d[miss] * length[miss, None]
            u_end = np.where(stopped, 0.0, uu - a * t_eff)
            v[miss] = d[miss] * u_end[miss, None]
            tl[miss] = 0.0

            if hit.any():
                h = np.flatnonzero(hit)
                lh = lam[h]
                if a > 0:
                    disc = np.maximum(uu[h] ** 2 - 2 * a * lh, 0.0)
                    t_c = (uu[h] - np.sqrt(disc)) / a
                else:
                    t_c = lh / uu[h]
                p[h] += d[h] * lh[:, None]
                p[h, axis[h]] = face[h]
                u_c = np.maximum(uu[h] - a * t_c, 0.0)
                v[h] = d[h] * u_c[:, None]
                v[h, axis[h]] = 0.0
                tl[h] = np.maximum(tl[h] - t_c, 0.0)

            pos[idx], vel[idx], t_left[idx] = p, v, tl
        return pos, vel

    # -- vectorized MDP layer ---------------------------------------------
    def dynamics(self, states, actions):
        cfg = self.config
        force = np.clip(actions, -cfg.force_limit, cfg.force_limit)
        pos = states[:, :2].copy()
        vel = states[:, 2:] + cfg.impulse_gain * force
        speed = np.hypot(vel[:, 0], vel[:, 1])
        over = speed > cfg.speed_limit
        if over.any():
            vel[over] *= (cfg.speed_limit / speed[over])[:, None]
        n = len(states)
        settled = np.zeros(n, dtype=bool)
        substeps = np.zeros(n, dtype=int)
        for _ in range(cfg.max_substeps):
            act = np.flatnonzero(~settled)
            if act.size == 0:
                break
            pos[act], vel[act] = self._advance(pos[act], vel[act], np.full(act.size, cfg.substep_dt))
            substeps[act] += 1
            slow = act[np.hypot(vel[act, 0], vel[act, 1]) < cfg.settle_speed]
            if slow.size:
                if cfg.deceleration > 0:
                    pos[slow], vel[slow] = self._advance(pos[slow], vel[slow], np.full(slow.size, np.inf))
                vel[slow] = 0.0
                settled[slow] = True
        self.last_substeps = substeps
        return np.concatenate([pos, vel], axis=1)

    def goals_of(self, states):
        return np.array(states[:, :2], dtype=float, copy=True)

    def success_mask(self, states, goals):
        cfg = self.config
        still = np.hypot(states[:, 2], states[:, 3]) < cfg.settle_speed
        return still & (np.linalg.norm(states[:, :2] - goals, axis=1) <= cfg.epsilon)

    def valid_mask(self, states):
        ok = np.all(np.isfinite(states), axis=1)
        ok &= np.hypot(states[:, 2], states[:, 3]) <= self.config.speed_limit
        return ok & self.in_free_space(states[:, :2])

    def sample_states(self, rng, n):
        cfg = self.config
        r = cfg.h_cube / 2
        out = np.empty((0, 2))
        while len(out) < n:
            cand = rng.uniform(r, cfg.h_table - r, size=(2 * n, 2))
            out = np.concatenate([out, cand[self.in_free_space(cand)]])
        return np.concatenate([out[:n], np.zeros((n, 2))], axis=1)

    def default_seed_state(self):
        return np.array(self.config.seed_state, dtype=float)
