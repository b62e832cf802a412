"""Goal-conditioned Gaussian policy and the reference on-policy learner.

The learner only has to provide ``update_policy(params, batch) -> params``;
:class:`ReferenceLearner` implements it with a clipped-ratio policy-gradient
surrogate and a separately regressed value baseline.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .mdp import GoalEnv, Trajectory
from .nets import Adam, Architecture, backward, forward, init_params
from .sampler import ReachabilityRegion, record_outcome

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
_LOG_2PI = math.log(2 * math.pi)


class DivergenceError(RuntimeError):
    """Non-finite policy output or loss."""


@dataclass
class LearnerConfig:
    P_new: float = 0.6
    episodes_per_iteration: int = 50
    gamma: float = 0.99
    lam: float = 0.95
    lr: float = 3e-4
    value_lr: float | None = None
    clip_ratio: float = 0.2
    epochs: int = 10
    n_minibatches: int = 4
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    init_log_std: float = math.log(0.5)
    output_init_scale: float = 0.01
    max_grad_norm: float | None = 0.5
    entropy_coef: float = 0.0
    max_retries: int = 20

    def __post_init__(self):
        if not 0.0 <= self.P_new <= 1.0:
            raise ValueError("LearnerConfig: need 0 <= P_new <= 1")
        if self.episodes_per_iteration < 1:
            raise ValueError("LearnerConfig: episodes_per_iteration must be >= 1")
        if not 0.0 < self.gamma <= 1.0 or not 0.0 <= self.lam <= 1.0:
            raise ValueError("LearnerConfig: need gamma in (0, 1] and lam in [0, 1]")
        if self.lr < 0 or self.epochs < 0 or self.n_minibatches < 1 or self.clip_ratio <= 0:
            raise ValueError("LearnerConfig: invalid lr, epochs, n_minibatches or clip_ratio")
        self.hidden = tuple(self.hidden)
        if self.value_lr is None:
            self.value_lr = self.lr


@dataclass
class PolicyParams:
    arch: Architecture
    theta: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        if self.theta.shape != (self.arch.n_params,):
            raise ValueError("PolicyParams: parameter count does not match architecture")
        if self.log_std.shape != (self.arch.output_dim,):
            raise ValueError("PolicyParams: log_std must have one entry per action dimension")

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.arch, self.theta.copy(), self.log_std.copy())

    def fingerprint(self) -> str:
        h = hashlib.sha1(self.theta.tobytes())
        h.update(self.log_std.tobytes())
        return h.hexdigest()

    def mean(self, obs: np.ndarray) -> np.ndarray:
        mu, _ = forward(self.arch, self.theta, obs)
        return mu


def policy_architecture(env: GoalEnv, hidden=(64, 64), activation="tanh") -> Architecture:
    spec = env.spec
    lo = np.concatenate([spec.state_low, spec.goal_low])
    hi = np.concatenate([spec.state_high, spec.goal_high])
    return Architecture(
        input_dim=spec.state_dim + spec.goal_dim,
        hidden=tuple(hidden),
        output_dim=spec.action_dim,
        activation=activation,
        input_shift=tuple(float(v) for v in (lo + hi) / 2),
        input_scale=tuple(float(v) for v in (hi - lo) / 2),
    )


def init_policy(env: GoalEnv, cfg: LearnerConfig, rng: np.random.Generator) -> PolicyParams:
    arch = policy_architecture(env, cfg.hidden, cfg.activation)
    theta = init_params(arch, rng, output_scale=cfg.output_init_scale)
    return PolicyParams(arch, theta, np.full(arch.output_dim, cfg.init_log_std))


def _obs(states, goals):
    return np.concatenate([np.atleast_2d(states), np.atleast_2d(goals)], axis=1)


def policy_act(params: PolicyParams, s, g, rng: np.random.Generator | None = None, deterministic: bool = False):
    mu = params.mean(_obs(np.asarray(s, float), np.asarray(g, float)))[0]
    if not np.all(np.isfinite(mu)):
        raise DivergenceError("policy produced a non-finite action mean")
    if deterministic:
        return mu
    return mu + np.exp(params.log_std) * rng.standard_normal(mu.shape)


def gaussian_log_prob(actions, mu, log_std):
    z = (actions - mu) * np.exp(-log_std)
    return -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - 0.5 * mu.shape[1] * _LOG_2PI


# -- start / goal sampling ---------------------------------------------------
def sample_start_goal(
    region: ReachabilityRegion,
    P_new: float,
    rng: np.random.Generator,
    env: GoalEnv | None = None,
    max_retries: int = 20,
):
    """Returns ``(start_index, goal, source)`` with ``source`` in {"current", "archive"}."""
    if not region.current or not region.archive:
        raise ValueError("sample_start_goal needs non-empty current and archive sets")
    for _ in range(max_retries + 1):
        i = int(rng.integers(len(region.current)))
        if rng.random() < P_new:
            source, g = "current", region.current[int(rng.integers(len(region.current)))].goal
        else:
            source, g = "archive", region.archive[int(rng.integers(len(region.archive)))].goal
        if env is None or not env.is_success(region.current[i].state, g):
            return i, g, source
    log.warning("sample_start_goal: degenerate region, every retry paired a start with its own goal")
    return i, g, source


# -- rollouts ----------------------------------------------------------------
@dataclass
class RolloutBatch:
    trajectories: list
    start_indices: list
    goal_sources: list
    fingerprint: str = ""

    @property
    def r_avg(self) -> float:
        if not self.trajectories:
            return 0.0
        return sum(t.success for t in self.trajectories) / len(self.trajectories)

    @property
    def mean_length(self) -> float:
        return float(np.mean([t.length for t in self.trajectories])) if self.trajectories else 0.0


def run_episodes(
    env: GoalEnv,
    policy,
    starts: np.ndarray,
    goals: np.ndarray,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> list:
    """Lock-step episodes. ``policy`` is PolicyParams or a callable ``(states, goals) -> actions``."""
    starts = np.asarray(starts, dtype=float)
    goals = np.asarray(goals, dtype=float)
    n = len(starts)
    T = env.spec.horizon
    states = env.canonical_state(starts.copy())
    active = np.ones(n, dtype=bool)
    S, A, R, LP, IDX = [], [], [], [], []
    success = np.zeros(n, dtype=bool)
    lengths = np.zeros(n, dtype=int)
    is_params = isinstance(policy, PolicyParams)
    for _ in range(T):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s, g = states[idx], goals[idx]
        if is_params:
            mu = policy.mean(_obs(s, g))
            if not np.all(np.isfinite(mu)):
                raise DivergenceError("policy produced a non-finite action mean")
            if deterministic:
                a = mu
            else:
                a = mu + np.exp(policy.log_std) * rng.standard_normal(mu.shape)
            LP.append(gaussian_log_prob(a, mu, policy.log_std))
        else:
            a = np.asarray(policy(s, g), dtype=float).reshape(len(idx), env.spec.action_dim)
            LP.append(np.zeros(len(idx)))
        nxt = env.dynamics(s, env.spec.clip_action(a))
        hit = env.success_mask(nxt, g)
        S.append(s)
        A.append(a)
        R.append(env.spec.step_penalty + hit.astype(float))
        IDX.append(idx)
        states[idx] = nxt
        lengths[idx] += 1
        success[idx[hit]] = True
        active[idx[hit]] = False

    per_s = [[] for _ in range(n)]
    per_a = [[] for _ in range(n)]
    per_r = [[] for _ in range(n)]
    per_lp = [[] for _ in range(n)]
    for s, a, r, lp, idx in zip(S, A, R, LP, IDX):
        for k, e in enumerate(idx):
            per_s[e].append(s[k])
            per_a[e].append(a[k])
            per_r[e].append(r[k])
            per_lp[e].append(lp[k])
    sd, ad = env.spec.state_dim, env.spec.action_dim
    return [
        Trajectory(
            start=starts[e],
            goal=goals[e],
            states=np.array(per_s[e]).reshape(-1, sd),
            actions=np.array(per_a[e]).reshape(-1, ad),
            rewards=np.array(per_r[e], dtype=float),
            success=bool(success[e]),
            final_state=states[e].copy(),
            log_probs=np.array(per_lp[e], dtype=float),
        )
        for e in range(n)
    ]


def collect_rollouts(
    params: PolicyParams,
    env: GoalEnv,
    region: ReachabilityRegion | None,
    cfg: LearnerConfig,
    rng: np.random.Generator,
) -> RolloutBatch:
    """One iteration of episodes. ``region=None`` samples uniform start/goal pairs instead."""
    E = cfg.episodes_per_iteration
    if region is None:
        starts, goals = env.sample_eval_pairs(rng, E)
        idxs, sources = [None] * E, ["uniform"] * E
    else:
        picks = [sample_start_goal(region, cfg.P_new, rng, env, cfg.max_retries) for _ in range(E)]
        idxs = [p[0] for p in picks]
        sources = [p[2] for p in picks]
        starts = np.array([region.current[i].state for i in idxs])
        goals = np.array([p[1] for p in picks])
    trajs = run_episodes(env, params, starts, goals, rng)
    if region is not None:
        for i, t in zip(idxs, trajs):
            record_outcome(region, i, t.success)
    return RolloutBatch(trajs, idxs, sources, params.fingerprint())


# -- advantage estimation ----------------------------------------------------
@dataclass
class AdvantageEstimate:
    advantages: np.ndarray  # normalized
    raw_advantages: np.ndarray
    returns: np.ndarray
    values: np.ndarray


def compute_advantages(batch: RolloutBatch, gamma: float, lam: float, value_fn) -> AdvantageEstimate:
    """``value_fn(states, goals) -> values``. Every episode end is terminal (finite horizon)."""
    if not batch.trajectories:
        raise ValueError("compute_advantages: empty batch")
    advs, rets, vals = [], [], []
    for tr in batch.trajectories:
        n = tr.length
        if n == 0:
            continue
        v = np.asarray(value_fn(tr.states, np.repeat(tr.goal[None], n, axis=0)), dtype=float).reshape(n)
        v_next = np.append(v[1:], 0.0)
        delta = tr.rewards + gamma * v_next - v
        adv = np.empty(n)
        ret = np.empty(n)
        a_acc = r_acc = 0.0
        for t in range(n - 1, -1, -1):
            a_acc = delta[t] + gamma * lam * a_acc
            r_acc = tr.rewards[t] + gamma * r_acc
            adv[t] = a_acc
            ret[t] = r_acc
        advs.append(adv)
        rets.append(ret)
        vals.append(v)
    raw = np.concatenate(advs)
    std = raw.std()
    norm = raw - raw.mean()
    if std > 1e-8:
        norm = norm / std
    return AdvantageEstimate(norm, raw, np.concatenate(rets), np.concatenate(vals))


# -- policy update -----------------------------------------------------------
def surrogate_loss_and_grad(params: PolicyParams, obs, actions, logp_old, adv, clip_ratio, entropy_coef=0.0):
    """Negated clipped surrogate (to minimize) and its gradient w.r.t. ``(theta, log_std)``."""
    mu, cache = forward(params.arch, params.theta, obs)
    log_std = params.log_std
    logp = gaussian_log_prob(actions, mu, log_std)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1 - clip_ratio, 1 + clip_ratio)
    s1, s2 = ratio * adv, clipped * adv
    n = len(adv)
    entropy = np.sum(log_std) + 0.5 * len(log_std) * (1 + _LOG_2PI)
    loss = -np.mean(np.minimum(s1, s2)) - entropy_coef * entropy
    # d(-surrogate)/d logp per sample
    g_logp = np.where(s1 <= s2, -adv * ratio, 0.0) / n
    inv_var = np.exp(-2 * log_std)
    diff = actions - mu
    g_mu = g_logp[:, None] * diff * inv_var
    g_theta = backward(params.arch, params.theta, cache, g_mu)
    g_log_std = np.sum(g_logp[:, None] * (diff * diff * inv_var - 1.0), axis=0) - entropy_coef
    return loss, g_theta, g_log_std


def _clip_norm(g, max_norm):
    if max_norm is None:
        return g
    norm = np.linalg.norm(g)
    return g * (max_norm / norm) if norm > max_norm else g


@dataclass
class ReferenceLearner:
    """Clipped-surrogate policy gradient with a value baseline of the same architecture."""

    cfg: LearnerConfig
    policy_arch: Architecture
    rng: np.random.Generator
    value_arch: Architecture = field(init=False)
    value_theta: np.ndarray = field(init=False)
    diverged: bool = field(default=False, init=False)
    last_stats: dict = field(default_factory=dict, init=False)

    def __post_init__(self):
        self.value_arch = replace(self.policy_arch, output_dim=1)
        self.value_theta = init_params(self.value_arch, self.rng, output_scale=1.0)
        n_pol = self.policy_arch.n_params + self.policy_arch.output_dim
        self._pol_opt = Adam(n_pol, self.cfg.lr)
        self._val_opt = Adam(self.value_arch.n_params, self.cfg.value_lr)

    def value(self, states, goals):
        v, _ = forward(self.value_arch, self.value_theta, _obs(states, goals))
        return v[:, 0]

    def update_policy(self, params: PolicyParams, batch: RolloutBatch) -> PolicyParams:
        if batch.fingerprint and batch.fingerprint != params.fingerprint():
            raise ValueError("update_policy: batch was not collected with these parameters (off-policy)")
        cfg = self.cfg
        self.diverged = False
        est = compute_advantages(batch, cfg.gamma, cfg.lam, self.value)
        trajs = [t for t in batch.trajectories if t.length]
        obs = np.concatenate([_obs(t.states, np.repeat(t.goal[None], t.length, 0)) for t in trajs])
        actions = np.concatenate([t.actions for t in trajs])
        logp_old = np.concatenate([t.log_probs for t in trajs])
        n = len(obs)
        n_th = params.theta.size

        x = np.concatenate([params.theta, params.log_std])
        vtheta = self.value_theta.copy()
        pol_opt_state = (self._pol_opt.m.copy(), self._pol_opt.v.copy(), self._pol_opt.t)
        val_opt_state = (self._val_opt.m.copy(), self._val_opt.v.copy(), self._val_opt.t)
        losses = []
        mb = max(1, math.ceil(n / cfg.n_minibatches))
        for _ in range(cfg.epochs):
            order = self.rng.permutation(n)
            for k in range(0, n, mb):
                j = order[k : k + mb]
                cur = PolicyParams(params.arch, x[:n_th], x[n_th:])
                loss, g_th, g_ls = surrogate_loss_and_grad(
                    cur, obs[j], actions[j], logp_old[j], est.advantages[j], cfg.clip_ratio, cfg.entropy_coef
                )
                v, vcache = forward(self.value_arch, vtheta, obs[j])
                verr = v[:, 0] - est.returns[j]
                vloss = 0.5 * np.mean(verr**2)
                if not (np.isfinite(loss) and np.isfinite(vloss)):
                    log.error("update_policy: non-finite loss; update aborted")
                    self.diverged = True
                    self._pol_opt.m, self._pol_opt.v, self._pol_opt.t = pol_opt_state
                    self._val_opt.m, self._val_opt.v, self._val_opt.t = val_opt_state
                    return params
                g = _clip_norm(np.concatenate([g_th, g_ls]), cfg.max_grad_norm)
                x = self._pol_opt.step(x, g)
                gv = backward(self.value_arch, vtheta, vcache, (verr / len(j))[:, None])
                vtheta = self._val_opt.step(vtheta, _clip_norm(gv, cfg.max_grad_norm))
                losses.append(loss)
        if not np.all(np.isfinite(x)):
            self.diverged = True
            return params
        self.value_theta = vtheta
        self.last_stats = {"policy_loss": float(np.mean(losses)) if losses else 0.0, "n_samples": n}
        return PolicyParams(params.arch, x[:n_th].copy(), x[n_th:].copy())


# -- checkpoints -------------------------------------------------------------
def save_checkpoint(path, params: PolicyParams, value_params=None, rng_state=None, iteration: int = 0) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "architecture": params.arch.to_dict(),
        "params": params.theta.tolist(),
        "log_stds": params.log_std.tolist(),
        "value_params": [] if value_params is None else np.asarray(value_params).tolist(),
        "rng_state": rng_state,
        "iteration": int(iteration),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_checkpoint(path) -> tuple:
    """Returns ``(PolicyParams, document)``."""
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    arch = Architecture.from_dict(doc["architecture"])
    params = PolicyParams(arch, np.asarray(doc["params"], dtype=float), np.asarray(doc["log_stds"], dtype=float))
    return params, doc
