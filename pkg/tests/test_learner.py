from collections import deque
import logging
import math

import numpy as np
import pytest

from region_grow.envs import LineWorld, LineWorldConfig, make_env
from region_grow.learner import (
    DivergenceError,
    LearnerConfig,
    PolicyParams,
    ReferenceLearner,
    RolloutBatch,
    collect_rollouts,
    compute_advantages,
    gaussian_log_prob,
    init_policy,
    load_checkpoint,
    policy_act,
    policy_architecture,
    run_episodes,
    sample_start_goal,
    save_checkpoint,
    surrogate_loss_and_grad,
)
from region_grow.mdp import Trajectory
from region_grow.nets import Architecture, backward, forward, init_params
from region_grow.sampler import RegionEntry, SamplerConfig, make_region, resample_states


def _zero_policy(env):
    arch = policy_architecture(env, hidden=(8,))
    return PolicyParams(arch, np.zeros(arch.n_params), np.zeros(arch.output_dim))


def _traj(rewards, states=None, goal=(0.0,)):
    n = len(rewards)
    states = np.zeros((n, 1)) if states is None else np.asarray(states, float).reshape(n, 1)
    return Trajectory(
        start=states[0], goal=np.array(goal), states=states, actions=np.zeros((n, 1)),
        rewards=np.asarray(rewards, float), success=False, log_probs=np.zeros(n),
    )


# -- policy --------------------------------------------------------------------
def test_zero_params_give_zero_action():
    env = LineWorld()
    assert policy_act(_zero_policy(env), [3.0], [1.0], deterministic=True).tolist() == [0.0]


def test_vanishing_noise_and_rng_determinism():
    env = make_env("maze")
    p = init_policy(env, LearnerConfig(), np.random.default_rng(0))
    s, g = np.array([0.5, 0.2, 0, 0]), np.array([0.3, 0.3])
    mu = policy_act(p, s, g, deterministic=True)
    quiet = PolicyParams(p.arch, p.theta, np.full(2, -20.0))
    assert policy_act(quiet, s, g, np.random.default_rng(1)) == pytest.approx(mu, abs=1e-7)
    a1 = policy_act(p, s, g, np.random.default_rng(5))
    a2 = policy_act(p, s, g, np.random.default_rng(5))
    assert a1.tolist() == a2.tolist()


def test_non_finite_output_raises():
    env = LineWorld()
    p = _zero_policy(env)
    p.theta[-1] = np.nan
    with pytest.raises(DivergenceError):
        policy_act(p, [0.0], [1.0], deterministic=True)


def test_architecture_round_trip():
    arch = policy_architecture(make_env("reacher"))
    assert Architecture.from_dict(arch.to_dict()) == arch
    assert arch.input_dim == 6 and arch.output_dim == 2 and arch.hidden == (64, 64)


# -- start/goal sampling ---------------------------------------------------------
def _spread_region(n=20):
    env = LineWorld()
    region = make_region(env, [0.0])
    for x in np.linspace(-50, 50, n):
        s = np.array([x])
        region.current.append(RegionEntry(s, s.copy(), region.new_history()))
        region.archive.append(RegionEntry(s, s.copy(), region.new_history(), archive_id=len(region.archive)))
    return env, region


def test_p_new_one_always_current():
    env, region = _spread_region()
    rng = np.random.default_rng(0)
    assert {sample_start_goal(region, 1.0, rng, env)[2] for _ in range(500)} == {"current"}


def test_goal_source_frequency():
    _, region = _spread_region()
    rng = np.random.default_rng(0)
    n = 100_000
    hits = sum(sample_start_goal(region, 0.6, rng)[2] == "current" for _ in range(n))
    assert abs(hits / n - 0.6) <= 0.01


def test_self_pairs_rejected():
    env, region = _spread_region(5)
    rng = np.random.default_rng(1)
    for _ in range(300):
        i, g, _ = sample_start_goal(region, 0.6, rng, env)
        assert not env.is_success(region.current[i].state, g)


def test_degenerate_region_warns(caplog):
    env = LineWorld()
    region = make_region(env, [0.0])
    with caplog.at_level(logging.WARNING):
        i, g, _ = sample_start_goal(region, 0.6, np.random.default_rng(0), env)
    assert "degenerate region" in caplog.text
    assert i == 0 and g.tolist() == [0.0]


# -- rollouts ----------------------------------------------------------------------
def _region(env, sigma=0.5):
    region = make_region(env, env.default_seed_state())
    region.current = resample_states(region, sigma, SamplerConfig(), env, np.random.default_rng(0))
    return region


def test_collect_rollouts_immediate_success():
    env = LineWorld(LineWorldConfig(epsilon=100.0))
    region = _region(env)
    p = init_policy(env, LearnerConfig(), np.random.default_rng(0))
    batch = collect_rollouts(p, env, region, LearnerConfig(episodes_per_iteration=30), np.random.default_rng(1))
    assert batch.r_avg == 1.0
    assert all(t.length == 1 for t in batch.trajectories)


def test_collect_rollouts_all_fail_and_bookkeeping():
    env = LineWorld(LineWorldConfig(epsilon=1e-9))
    region = _region(env, sigma=1.0)
    p = init_policy(env, LearnerConfig(), np.random.default_rng(0))
    cfg = LearnerConfig(episodes_per_iteration=40)
    batch = collect_rollouts(p, env, region, cfg, np.random.default_rng(1))
    assert batch.r_avg == 0.0
    assert all(t.length == env.spec.horizon and not t.success for t in batch.trajectories)
    assert sum(len(e.history) for e in region.current) == 40
    assert batch.fingerprint == p.fingerprint()


def test_batch_success_matches_pushed_outcomes():
    env = LineWorld(LineWorldConfig(epsilon=6.0))
    region = _region(env, sigma=1.0)
    p = init_policy(env, LearnerConfig(), np.random.default_rng(0))
    batch = collect_rollouts(p, env, region, LearnerConfig(episodes_per_iteration=200), np.random.default_rng(2))
    pushed = [v for e in region.current for v in e.history]
    assert 0 < batch.r_avg < 1
    assert sum(pushed) == sum(t.success for t in batch.trajectories)
    assert batch.r_avg == pytest.approx(np.mean(pushed))


def test_run_episodes_matches_single_instance_steps():
    env = make_env("reacher")
    p = init_policy(env, LearnerConfig(), np.random.default_rng(0))
    starts, goals = env.sample_eval_pairs(np.random.default_rng(3), 4)
    trajs = run_episodes(env, p, starts, goals, deterministic=True)
    for s, g, tr in zip(starts, goals, trajs):
        env.reset(s, g)
        for k in range(tr.length):
            out = env.step(policy_act(p, env.observe(), g, deterministic=True))
        assert out.success == tr.success
        assert np.allclose(out.next_state, tr.final_state)


# -- advantages ----------------------------------------------------------------------
def test_single_step_advantage():
    batch = RolloutBatch([_traj([0.7])], [0], ["current"])
    est = compute_advantages(batch, 0.99, 0.95, lambda s, g: np.full(len(s), 0.2))
    assert est.returns.tolist() == [0.7]
    assert est.raw_advantages == pytest.approx([0.5])


def test_gae_with_unit_coefficients_is_return_minus_baseline():
    rng = np.random.default_rng(0)
    trajs = [_traj(rng.normal(size=n), rng.normal(size=n)) for n in (5, 1, 9)]
    vf = lambda s, g: np.sin(s[:, 0])  # noqa: E731
    est = compute_advantages(RolloutBatch(trajs, [0] * 3, ["current"] * 3), 1.0, 1.0, vf)
    want = []
    for t in trajs:
        for k in range(t.length):
            want.append(sum(t.rewards[k:]) - math.sin(t.states[k, 0]))
    assert est.raw_advantages == pytest.approx(want, abs=1e-12)
    assert est.advantages.mean() == pytest.approx(0.0, abs=1e-12)
    assert est.advantages.std() == pytest.approx(1.0)


def test_zero_rewards_zero_values():
    batch = RolloutBatch([_traj([0.0] * 4), _traj([0.0] * 2)], [0, 0], ["current"] * 2)
    est = compute_advantages(batch, 0.99, 0.95, lambda s, g: np.zeros(len(s)))
    assert np.all(est.raw_advantages == 0) and np.all(est.advantages == 0)


def test_discounted_returns():
    batch = RolloutBatch([_traj([-0.01, -0.01, 0.99])], [0], ["current"])
    est = compute_advantages(batch, 0.9, 0.5, lambda s, g: np.zeros(len(s)))
    assert est.returns == pytest.approx([-0.01 - 0.009 + 0.81 * 0.99, -0.01 + 0.9 * 0.99, 0.99])


# -- gradients ----------------------------------------------------------------------
def _fd_case(seed):
    rng = np.random.default_rng(seed)
    arch = Architecture(input_dim=3, hidden=(4, 4), output_dim=2)
    theta = init_params(arch, rng, output_scale=1.0)
    p = PolicyParams(arch, theta, rng.normal(-0.5, 0.2, 2))
    obs = rng.normal(size=(10, 3))
    mu, _ = forward(arch, theta, obs)
    actions = mu + rng.normal(size=(10, 2)) * np.exp(p.log_std)
    # behaviour policy slightly different so ratios are away from 1 but mostly unclipped
    logp_old = gaussian_log_prob(actions, mu, p.log_std) + rng.normal(0, 0.05, 10)
    adv = rng.normal(size=10)
    return p, obs, actions, logp_old, adv


@pytest.mark.parametrize("seed", range(10))
def test_surrogate_gradient_matches_finite_differences(seed):
    p, obs, actions, logp_old, adv = _fd_case(seed)
    clip = 0.2

    def loss_at(x):
        q = PolicyParams(p.arch, x[: p.theta.size], x[p.theta.size :])
        return surrogate_loss_and_grad(q, obs, actions, logp_old, adv, clip, 0.01)[0]

    _, g_th, g_ls = surrogate_loss_and_grad(p, obs, actions, logp_old, adv, clip, 0.01)
    g = np.concatenate([g_th, g_ls])
    x0 = np.concatenate([p.theta, p.log_std])
    h = 1e-6
    fd = np.array([(loss_at(x0 + h * e) - loss_at(x0 - h * e)) / (2 * h) for e in np.eye(x0.size)])
    assert np.linalg.norm(fd - g) / max(np.linalg.norm(fd), 1e-12) <= 1e-4


def test_backward_matches_finite_differences_relu():
    rng = np.random.default_rng(1)
    arch = Architecture(input_dim=2, hidden=(5,), output_dim=1, activation="relu")
    theta = init_params(arch, rng)
    x = rng.normal(size=(7, 2))
    w = rng.normal(size=(7, 1))
    f = lambda t: float(np.sum(w * forward(arch, t, x)[0]))  # noqa: E731
    _, cache = forward(arch, theta, x)
    g = backward(arch, theta, cache, w)
    fd = np.array([(f(theta + 1e-6 * e) - f(theta - 1e-6 * e)) / 2e-6 for e in np.eye(theta.size)])
    assert np.allclose(g, fd, atol=1e-6)


# -- updates ------------------------------------------------------------------------
def _bandit_batch(p, rng, n=64):
    obs = np.zeros((n, 2))
    mu = p.mean(obs)
    actions = mu + np.exp(p.log_std) * rng.standard_normal(mu.shape)
    lp = gaussian_log_prob(actions, mu, p.log_std)
    trajs = [
        Trajectory(np.zeros(1), np.zeros(1), np.zeros((1, 1)), actions[i : i + 1],
                   np.array([-(actions[i, 0] - 1.0) ** 2]), False, log_probs=lp[i : i + 1])
        for i in range(n)
    ]
    return RolloutBatch(trajs, [0] * n, ["current"] * n, p.fingerprint())


def test_bandit_mean_converges_to_optimum():
    env = LineWorld(LineWorldConfig(x_min=-1, x_max=1, max_step=3.0, epsilon=0.5))
    cfg = LearnerConfig(lr=1e-3, epochs=4, n_minibatches=2, hidden=(8,))
    rng = np.random.default_rng(0)
    p = init_policy(env, cfg, rng)
    learner = ReferenceLearner(cfg, p.arch, np.random.default_rng(1))
    track = []
    for _ in range(100):
        p = learner.update_policy(p, _bandit_batch(p, rng))
        track.append(float(p.mean(np.zeros((1, 2)))[0, 0]))
    track = np.array(track)
    near = int(np.argmax(np.abs(track - 1.0) < 0.05))
    assert 0 < near < 100
    # monotone approach, then it stays at the optimum
    assert np.all(np.diff(track[: near + 1]) > -1e-3)
    assert np.all(np.abs(track[near:] - 1.0) < 0.1)


def test_zero_learning_rate_is_null_update():
    env = LineWorld()
    cfg = LearnerConfig(lr=0.0)
    rng = np.random.default_rng(0)
    p = init_policy(env, cfg, rng)
    learner = ReferenceLearner(cfg, p.arch, rng)
    q = learner.update_policy(p, _bandit_batch(p, rng))
    assert q.theta.tolist() == p.theta.tolist() and q.log_std.tolist() == p.log_std.tolist()


def test_off_policy_batch_rejected():
    env = LineWorld()
    rng = np.random.default_rng(0)
    p = init_policy(env, LearnerConfig(), rng)
    batch = _bandit_batch(p, rng)
    stale = p.copy()
    stale.theta[0] += 1e-3
    with pytest.raises(ValueError, match="off-policy"):
        ReferenceLearner(LearnerConfig(), p.arch, rng).update_policy(stale, batch)


def test_non_finite_loss_aborts_update():
    env = LineWorld()
    rng = np.random.default_rng(0)
    p = init_policy(env, LearnerConfig(), rng)
    batch = _bandit_batch(p, rng)
    batch.trajectories[0].rewards[0] = np.nan
    learner = ReferenceLearner(LearnerConfig(), p.arch, rng)
    q = learner.update_policy(p, batch)
    assert learner.diverged
    assert q.theta.tolist() == p.theta.tolist()


def test_checkpoint_round_trip(tmp_path):
    env = make_env("maze")
    rng = np.random.default_rng(0)
    p = init_policy(env, LearnerConfig(hidden=(6, 5)), rng)
    learner = ReferenceLearner(LearnerConfig(hidden=(6, 5)), p.arch, rng)
    path = tmp_path / "ck.json"
    save_checkpoint(path, p, learner.value_theta, rng.bit_generator.state, 7)
    q, doc = load_checkpoint(path)
    assert q.theta.tolist() == p.theta.tolist() and q.arch == p.arch
    assert set(doc) == {"version", "architecture", "params", "log_stds", "value_params", "rng_state", "iteration"}
    assert doc["iteration"] == 7 and len(doc["value_params"]) == learner.value_theta.size


def test_config_invariants():
    for bad in (dict(P_new=1.5), dict(episodes_per_iteration=0), dict(gamma=0.0), dict(lam=2.0)):
        with pytest.raises(ValueError):
            LearnerConfig(**bad)
