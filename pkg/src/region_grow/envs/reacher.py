"""Planar two-link arm that must hold its end effector still at a marker."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..mdp import EnvSpec, GoalEnv


def wrap_angle(theta):
    """Wrap to (-pi, pi]; angles already in range are returned unchanged."""
    theta = np.asarray(theta, dtype=float)
    w = np.mod(theta + np.pi, 2 * np.pi) - np.pi
    w = np.where(w <= -np.pi, w + 2 * np.pi, w)
    return np.where((theta > -np.pi) & (theta <= np.pi), theta, w)


@dataclass
class ReacherConfig:
    l1: float = 0.1
    l2: float = 0.1
    dt: float = 0.05
    joint_damping: float = 10.0
    # actuator gear: joint acceleration = gear * action
    gear: float = 80.0
    torque_limit: float = 1.0
    epsilon_pos: float = 0.02
    v_max: float = 0.2
    omega_limit: float = 50.0
    T: int = 50
    step_penalty: float = -0.01
    seed_state: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.l1 > 0 and self.l2 > 0):
            raise ValueError("ReacherConfig: link lengths must be > 0")
        if not (self.epsilon_pos > 0 and self.v_max > 0):
            raise ValueError("ReacherConfig: epsilon_pos and v_max must be > 0")
        if self.dt <= 0 or self.joint_damping < 0 or self.torque_limit <= 0:
            raise ValueError("ReacherConfig: need dt > 0, joint_damping >= 0, torque_limit > 0")
        if self.T < 1:
            raise ValueError("ReacherConfig: T must be >= 1")


def reacher_fk(theta1, theta2, cfg: ReacherConfig):
    x = cfg.l1 * np.cos(theta1) + cfg.l2 * np.cos(theta1 + theta2)
    y = cfg.l1 * np.sin(theta1) + cfg.l2 * np.sin(theta1 + theta2)
    return x, y


def end_effector_velocity(theta1, theta2, omega1, omega2, cfg: ReacherConfig):
    """Cartesian end-effector velocity ``J(theta) @ omega``."""
    s1, c1 = np.sin(theta1), np.cos(theta1)
    s12, c12 = np.sin(theta1 + theta2), np.cos(theta1 + theta2)
    vx = -cfg.l1 * s1 * omega1 - cfg.l2 * s12 * (omega1 + omega2)
    vy = cfg.l1 * c1 * omega1 + cfg.l2 * c12 * (omega1 + omega2)
    return vx, vy


def joint_update(theta, omega, torque, dt, damping):
    """Exact zero-order-hold solution of ``theta'' = torque - damping * theta'`` over ``dt``."""
    if damping == 0:
        return theta + omega * dt + 0.5 * torque * dt * dt, omega + torque * dt
    omega_ss = torque / damping
    rho = np.exp(-damping * dt)
    new_omega = omega_ss + (omega - omega_ss) * rho
    new_theta = theta + omega_ss * dt + (omega - omega_ss) * (1.0 - rho) / damping
    return new_theta, new_omega


class SparseReacher(GoalEnv):
    """State ``(theta1, theta2, omega1, omega2)``; goal is the end-effector position."""

    name = "reacher"

    def __init__(self, config: ReacherConfig | None = None):
        super().__init__()
        self.config = cfg = config or ReacherConfig()
        reach = cfg.l1 + cfg.l2
        self.spec = EnvSpec(
            state_dim=4,
            goal_dim=2,
            action_dim=2,
            action_low=np.full(2, -cfg.torque_limit),
            action_high=np.full(2, cfg.torque_limit),
            horizon=cfg.T,
            step_penalty=cfg.step_penalty,
            state_low=np.array([-np.pi, -np.pi, -10.0, -10.0]),
            state_high=np.array([np.pi, np.pi, 10.0, 10.0]),
            goal_low=np.full(2, -reach),
            goal_high=np.full(2, reach),
        )

    def fk(self, states):
        x, y = reacher_fk(states[:, 0], states[:, 1], self.config)
        return np.stack([x, y], axis=1)

    def ee_speed(self, states):
        vx, vy = end_effector_velocity(states[:, 0], states[:, 1], states[:, 2], states[:, 3], self.config)
        return np.hypot(vx, vy)

    def dynamics(self, states, actions):
        cfg = self.config
        torque = cfg.gear * np.clip(actions, -cfg.torque_limit, cfg.torque_limit)
        theta, omega = joint_update(states[:, :2], states[:, 2:], torque, cfg.dt, cfg.joint_damping)
        return np.concatenate([wrap_angle(theta), omega], axis=1)

    def goals_of(self, states):
        return self.fk(states)

    def success_mask(self, states, goals):
        cfg = self.config
        dist = np.linalg.norm(self.fk(states) - goals, axis=1)
        return (dist <= cfg.epsilon_pos) & (self.ee_speed(states) <= cfg.v_max)

    def valid_mask(self, states):
        ang = states[:, :2]
        vel = states[:, 2:]
        ok = np.all(np.isfinite(states), axis=1)
        ok &= np.all((ang >= -np.pi) & (ang <= np.pi), axis=1)
        return ok & np.all(np.abs(vel) <= self.config.omega_limit, axis=1)

    def canonical_state(self, states):
        out = np.array(states, dtype=float, copy=True)
        out[:, :2] = wrap_angle(out[:, :2])
        return out

    def sample_states(self, rng, n):
        ang = rng.uniform(-np.pi, np.pi, size=(n, 2))
        return np.concatenate([wrap_angle(ang), np.zeros((n, 2))], axis=1)

    def default_seed_state(self):
        return np.array(self.config.seed_state, dtype=float)
