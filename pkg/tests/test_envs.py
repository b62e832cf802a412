import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import kstest

from region_grow.envs import (
    LineWorld,
    LineWorldConfig,
    Maze,
    MazeConfig,
    ReacherConfig,
    SparseReacher,
    lineworld_step,
    make_env,
    make_env_config,
    maze_step,
    reacher_fk,
    reacher_step,
    wrap_angle,
)
from region_grow.sampler import brownian_rollouts

from .oracles import clipped_normal_std, maze_fine, reacher_fine


# -- LineWorld -----------------------------------------------------------------
@pytest.mark.parametrize("a,expected", [(0.3, 0.3), (2.0, 0.5), (-2.0, -0.5)])
def test_lineworld_step_cap(a, expected):
    assert lineworld_step([0.0], [a], LineWorldConfig(max_step=0.5)).next_state[0] == expected


def test_lineworld_boundary_clip():
    cfg = LineWorldConfig(x_min=-1, x_max=1, max_step=0.5)
    assert lineworld_step([0.9], [0.5], cfg).next_state[0] == 1.0


@pytest.mark.parametrize("bad", [dict(x_min=1, x_max=0), dict(max_step=0), dict(epsilon=0), dict(epsilon=500)])
def test_lineworld_config_invariants(bad):
    with pytest.raises(ValueError):
        LineWorldConfig(**bad)


@given(x1=st.floats(-80, 80), x2=st.floats(-80, 80))
def test_lineworld_reachability_is_constructive(x1, x2):
    env = LineWorld()
    k = env.steps_between(x1, x2)
    assert k == math.ceil(abs(x2 - x1) / env.config.max_step - 1e-12)
    x = np.array([[x1]])
    for _ in range(k):
        x = env.dynamics(x, np.array([[x2 - x[0, 0]]]))
    assert x[0, 0] == pytest.approx(x2, abs=1e-9)


def test_brownian_final_std_matches_clipped_normal():
    cfg = LineWorldConfig(x_min=-1e6, x_max=1e6, max_step=0.5)
    env = LineWorld(cfg)
    H, sigma, n = 50, 0.5, 100_000
    visited, _ = brownian_rollouts(env, np.zeros((n, 1)), sigma, H, np.random.default_rng(0))
    expected = math.sqrt(H) * clipped_normal_std(sigma, cfg.max_step)
    # the std of a sample std is about std / sqrt(2n), i.e. 0.22% here
    assert visited[:, -1, 0].std() == pytest.approx(expected, rel=0.01)


def test_sample_eval_pair_lineworld_uniform():
    env = LineWorld()
    rng = np.random.default_rng(0)
    starts, goals = env.sample_eval_pairs(rng, 10_000)
    lo, hi = env.config.x_min, env.config.x_max
    cdf = lambda x: (x - lo) / (hi - lo)  # noqa: E731
    assert kstest(starts[:, 0], cdf).statistic < 0.02
    assert kstest(goals[:, 0], cdf).statistic < 0.02


# -- Reacher -------------------------------------------------------------------
@pytest.mark.parametrize(
    "theta,expected", [((0, 0), (0.2, 0.0)), ((np.pi / 2, 0), (0.0, 0.2)), ((np.pi / 2, -np.pi / 2), (0.1, 0.1))]
)
def test_reacher_fk_examples(theta, expected):
    assert reacher_fk(*theta, ReacherConfig()) == pytest.approx(expected, abs=1e-15)


@given(t1=st.floats(-10, 10), t2=st.floats(-10, 10), l1=st.floats(0.01, 2), l2=st.floats(0.01, 2))
def test_reacher_fk_within_reach(t1, t2, l1, l2):
    cfg = ReacherConfig(l1=l1, l2=l2)
    x, y = reacher_fk(t1, t2, cfg)
    assert math.hypot(x, y) <= l1 + l2 + 1e-12


def test_wrap_angle_range():
    w = wrap_angle(np.array([np.pi, -np.pi, 3 * np.pi, 0.0, -3.5]))
    assert np.all((w > -np.pi) & (w <= np.pi))
    assert w[0] == pytest.approx(np.pi) and w[1] == pytest.approx(np.pi)


def test_reacher_zero_torque_equilibrium():
    s = np.array([0.3, -1.2, 0.0, 0.0])
    assert reacher_step(s, [0.0, 0.0]).next_state.tolist() == s.tolist()


def test_reacher_constant_torque_geometric_series():
    cfg = ReacherConfig()
    env = SparseReacher(cfg)
    u = np.array([0.3, -0.2])
    s = np.zeros((1, 4))
    rho = math.exp(-cfg.joint_damping * cfg.dt)
    w_ss = cfg.gear * u / cfg.joint_damping
    fine = np.zeros(4)
    for k in range(1, 9):
        s = env.dynamics(s, u[None])
        fine = reacher_fine(fine, u, cfg.dt, cfg.joint_damping, cfg.gear, cfg.torque_limit)
        assert s[0, 2:] == pytest.approx(w_ss * (1 - rho**k), rel=1e-12)
        assert np.abs(s[0] - fine).max() < 1e-3


def test_reacher_sampled_goals_in_annulus():
    cfg = ReacherConfig(l1=0.12, l2=0.07)
    env = SparseReacher(cfg)
    rng = np.random.default_rng(3)
    _, goals = env.sample_eval_pairs(rng, 2000)
    r = np.linalg.norm(goals, axis=1)
    assert np.all(r >= abs(cfg.l1 - cfg.l2) - 1e-12) and np.all(r <= cfg.l1 + cfg.l2 + 1e-12)


# -- Maze ------------------------------------------------------------------------
def test_maze_zero_force_rest_is_fixed_point():
    env = Maze()
    s = np.array([[0.15, 0.2, 0.0, 0.0]])
    out = env.dynamics(s, np.zeros((1, 2)))
    assert out.tolist() == s.tolist()
    assert env.last_substeps.tolist() == [1]


def test_maze_sliding_over_goal_is_not_success():
    cfg = MazeConfig.open_table(impulse_gain=4.0)
    env = Maze(cfg)
    start = np.array([0.2, 0.5, 0.0, 0.0])
    final = env.dynamics(start[None], np.array([[1.0, 0.0]]))[0]
    assert final[0] > 0.45  # the cube passed x = 0.4 on its way
    assert not maze_step(start, [1.0, 0.0], cfg, goal=[0.4, 0.5]).success


def test_maze_push_into_wall_is_flush():
    cfg = MazeConfig.open_table(impulse_gain=4.0)
    start = np.array([0.3, 0.5, 0.0, 0.0])
    out = maze_step(start, [-1.0, 0.0], cfg).next_state
    assert out[0] == pytest.approx(cfg.h_cube / 2, abs=1e-12)
    assert out[2] == 0.0
    ref = maze_fine(start, np.array([-1.0, 0.0]), cfg)
    assert np.abs(out - ref).max() < 1e-3


def test_maze_oblique_wall_slide_matches_fine_oracle():
    cfg = MazeConfig.open_table(impulse_gain=3.0)
    start = np.array([0.2, 0.5, 0.0, 0.0])
    a = np.array([-0.4, 1.0])
    out = maze_step(start, a, cfg).next_state
    assert out[1] == pytest.approx(cfg.h_table - cfg.h_cube / 2)
    assert np.abs(out - maze_fine(start, a, cfg)).max() < 1e-3


def test_maze_success_requires_still_and_close():
    env = Maze()
    g = np.array([0.5, 0.2])
    assert env.is_success([0.5, 0.24, 0.0, 0.0], g)
    assert not env.is_success([0.5, 0.26, 0.0, 0.0], g)
    assert not env.is_success([0.5, 0.2, 0.05, 0.0], g)


def test_maze_energy_dissipation():
    env = Maze()
    rng = np.random.default_rng(5)
    s = env.sample_states(rng, 500)
    a = rng.uniform(-1, 1, (500, 2))
    v0 = np.hypot(*(s[:, 2:] + env.config.impulse_gain * a).T)
    out = env.dynamics(s, a)
    moving = v0 > 0
    assert np.all(np.hypot(out[moving, 2], out[moving, 3]) < v0[moving])


def test_maze_samples_in_free_space():
    env = Maze()
    s = env.sample_states(np.random.default_rng(0), 5000)
    assert np.all(env.in_free_space(s[:, :2]))
    assert np.all(s[:, 2:] == 0)
    # nothing is sampled inside the corridor walls
    assert not np.any(env.inside_walls(s[:, :2]))


def test_maze_config_invariants():
    with pytest.raises(ValueError):
        MazeConfig(walls=[[0, 0, 1, 0], [1, 0, 1, 1], [1, 1, 0, 1]])  # open on the left
    with pytest.raises(ValueError):
        MazeConfig(epsilon=0)
    with pytest.raises(ValueError):
        MazeConfig(settle_speed=0)


def test_make_env_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        make_env_config("maze", {"friction": 1.0})
    assert make_env("maze_open").config.walls == MazeConfig.open_table().walls


def test_success_implies_still_and_within_epsilon():
    env = Maze()
    rng = np.random.default_rng(9)
    s = env.sample_states(rng, 2000)
    g = s[:, :2] + rng.normal(0, 0.05, (2000, 2))
    out = env.dynamics(s, rng.uniform(-0.2, 0.2, (2000, 2)))
    ok = env.success_mask(out, g)
    assert ok.any()
    assert np.all(np.hypot(out[ok, 2], out[ok, 3]) < env.config.settle_speed)
    assert np.all(np.linalg.norm(out[ok, :2] - g[ok], axis=1) <= env.config.epsilon)
