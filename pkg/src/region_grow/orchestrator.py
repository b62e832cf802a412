"""Training loop wiring sampler and learner, plus evaluation and seed suites."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import TrainConfig
from .envs import make_env
from .learner import (
    DivergenceError,
    PolicyParams,
    ReferenceLearner,
    collect_rollouts,
    init_policy,
    run_episodes,
    save_checkpoint,
)
from .mdp import GoalEnv
from .sampler import (
    ReachabilityRegion,
    filter_states,
    make_region,
    resample_states,
    snapshot_records,
    update_variance,
)

log = logging.getLogger(__name__)

METRICS_HEADER = [
    "iteration",
    "r_avg",
    "sigma",
    "n_current",
    "n_archive",
    "mean_episode_length",
    "eval_success",
    "wall_time_s",
]
AGGREGATE_HEADER = ["iteration", "metric", "mean", "std", "n_seeds"]
AGGREGATED_METRICS = ("r_avg", "eval_success", "sigma")


@dataclass
class MetricsRow:
    iteration: int
    r_avg: float
    sigma: float | None
    n_current: int | None
    n_archive: int | None
    mean_episode_length: float
    eval_success: float | None = None
    wall_time_s: float | None = None

    def as_list(self) -> list:
        return ["" if v is None else repr(v) if isinstance(v, float) else str(v) for v in (
            self.iteration,
            self.r_avg,
            self.sigma,
            self.n_current,
            self.n_archive,
            self.mean_episode_length,
            self.eval_success,
            self.wall_time_s,
        )]


@dataclass
class TrainResult:
    params: PolicyParams
    metrics: list
    snapshots: list
    events: list = field(default_factory=list)
    region: ReachabilityRegion | None = None
    diverged: bool = False
    divergence_report: str = ""


def init_region(seed_state, env: GoalEnv, H_hist: int = 10) -> ReachabilityRegion:
    """Region with the seed as the only current and archived state (history ``[1]``)."""
    return make_region(env, seed_state, H_hist)


def evaluate(policy, env: GoalEnv, n_pairs: int, rng: np.random.Generator) -> float:
    """Deterministic-action success ratio on fresh uniform start/goal pairs."""
    if n_pairs < 1:
        raise ValueError("evaluate: n_pairs must be >= 1")
    starts, goals = env.sample_eval_pairs(rng, n_pairs)
    trajs = run_episodes(env, policy, starts, goals, deterministic=True)
    return sum(t.success for t in trajs) / n_pairs


def metrics_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for r in rows:
        w.writerow(r.as_list())
    return buf.getvalue()


def read_metrics(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _rng_streams(seed: int) -> dict:
    names = ("init", "rollout", "sampler", "eval", "learner")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def sampling_period(region, sigma, r_avg, cfg: TrainConfig, env, rng, events, iteration):
    """Variance update, filtering, archive absorption and resampling, in that order."""
    sc = cfg.sampler
    if cfg.mode == "adaptive":
        sigma = update_variance(sigma, r_avg, sc)
        events.append((iteration, "update_variance"))
    mastered = [e for e in region.current if e.mean_reward is not None and e.mean_reward > sc.R_max]
    filter_states(region, sc)
    events.append((iteration, "filter_states"))
    region.absorb(region.current)
    if sc.archive_mastered:
        region.absorb(mastered)
    events.append((iteration, "absorb"))
    region.current = resample_states(region, sigma, sc, env, rng)
    events.append((iteration, "resample_states"))
    return sigma


def train(cfg: TrainConfig, out_dir: str | None = None) -> TrainResult:
    out_dir = out_dir or cfg.output_dir
    env = make_env(cfg.env, cfg.env_config)
    rng = _rng_streams(cfg.seed)
    params = init_policy(env, cfg.learner, rng["init"])
    learner = ReferenceLearner(cfg.learner, params.arch, rng["learner"])
    uniform = cfg.mode == "uniform"
    sigma = None if uniform else float(cfg.initial_sigma)
    events: list = []
    snapshots: list = []
    metrics: list = []

    if out_dir:
        os.makedirs(os.path.join(out_dir, "checkpoints"), exist_ok=True)
        with open(os.path.join(out_dir, "config.json"), "w") as fh:
            json.dump(cfg.to_dict(), fh, indent=2, sort_keys=True)
        snap_path = os.path.join(out_dir, "region.jsonl")
        if os.path.exists(snap_path):
            os.remove(snap_path)

    def emit_snapshot(iteration):
        recs = snapshot_records(region, iteration)
        snapshots.append(recs)
        if out_dir:
            with open(snap_path, "a") as fh:
                for r in recs:
                    fh.write(json.dumps(r) + "\n")

    def checkpoint(name, iteration):
        if out_dir:
            save_checkpoint(
                os.path.join(out_dir, "checkpoints", name),
                params,
                learner.value_theta,
                rng["rollout"].bit_generator.state,
                iteration,
            )

    region = None
    if not uniform:
        seed_state = cfg.seed_state if cfg.seed_state is not None else env.default_seed_state()
        region = init_region(seed_state, env, cfg.sampler.H_hist)
        region.current = resample_states(region, sigma, cfg.sampler, env, rng["sampler"])
        events.append((0, "resample_states"))
        emit_snapshot(0)

    t0 = time.perf_counter()
    r_avg = 0.0
    diverged, report = False, ""
    for i in range(1, cfg.N + 1):
        if not uniform and i % cfg.sampler.K == 0:
            sigma = sampling_period(region, sigma, r_avg, cfg, env, rng["sampler"], events, i)
            emit_snapshot(i)
        try:
            batch = collect_rollouts(params, env, region, cfg.learner, rng["rollout"])
            events.append((i, "rollouts"))
            new_params = learner.update_policy(params, batch)
            events.append((i, "update_policy"))
            if learner.diverged:
                raise DivergenceError(f"non-finite loss in policy update at iteration {i}")
        except DivergenceError as exc:
            diverged, report = True, f"iteration {i}: {exc}"
            log.error("training halted: %s", report)
            checkpoint("diverged.json", i)
            if out_dir:
                with open(os.path.join(out_dir, "divergence.txt"), "w") as fh:
                    fh.write(report + "\n")
            break
        params = new_params
        r_avg = batch.r_avg
        row = MetricsRow(
            iteration=i,
            r_avg=float(r_avg),
            sigma=sigma,
            n_current=None if uniform else len(region.current),
            n_archive=None if uniform else len(region.archive),
            mean_episode_length=batch.mean_length,
        )
        if cfg.eval_every and (i % cfg.eval_every == 0 or i == cfg.N):
            row.eval_success = float(evaluate(params, env, cfg.eval_pairs, rng["eval"]))
        if cfg.record_wall_time:
            row.wall_time_s = round(time.perf_counter() - t0, 6)
        metrics.append(row)
        log.info(
            "iter %d r_avg=%.3f sigma=%s n_cur=%s n_arch=%s eval=%s",
            i, r_avg, sigma, row.n_current, row.n_archive, row.eval_success,
        )
        if i % cfg.checkpoint_every == 0:
            checkpoint(f"iter_{i:06d}.json", i)

    if not diverged:
        checkpoint("final.json", metrics[-1].iteration if metrics else 0)
    if out_dir:
        with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
            fh.write(metrics_csv(metrics))
    return TrainResult(params, metrics, snapshots, events, region, diverged, report)


# -- suites --------------------------------------------------------------------
def _run_one(args):
    name, cfg, seed, out_dir = args
    try:
        res = train(cfg.replace(seed=seed), out_dir)
        return name, seed, [m.__dict__ for m in res.metrics], None
    except Exception as exc:  # a failed run must not stop the suite
        log.exception("suite run %s seed %s failed", name, seed)
        return name, seed, None, f"{type(exc).__name__}: {exc}"


def aggregate(runs: list, metrics=AGGREGATED_METRICS) -> list:
    """Per-iteration mean/std across runs; ``runs`` is a list of metric-row dict lists."""
    rows = []
    n_iter = max((len(r) for r in runs), default=0)
    for it in range(n_iter):
        for m in metrics:
            vals = [float(r[it][m]) for r in runs if it < len(r) and r[it][m] not in (None, "")]
            if vals:
                rows.append([it + 1, m, float(np.mean(vals)), float(np.std(vals)), len(vals)])
    return rows


def _write_aggregate(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for r in rows:
            w.writerow([r[0], r[1], repr(r[2]), repr(r[3]), r[4]])


def run_suite(variants: dict, seeds, out_dir: str | None = None, jobs: int = 1) -> dict:
    """Train every ``(variant, seed)`` pair and aggregate curves per variant.

    Returns ``{variant: aggregate rows}``; failures are listed under ``"_failures"``.
    """
    if not variants or not seeds:
        raise ValueError("run_suite needs at least one variant and one seed")
    tasks = []
    for name, cfg in variants.items():
        for s in seeds:
            d = os.path.join(out_dir, name, f"seed_{s}") if out_dir else None
            tasks.append((name, cfg, s, d))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]

    per_variant = {name: [] for name in variants}
    failures = []
    for name, seed, rows, err in results:
        if err is None:
            per_variant[name].append(rows)
        else:
            failures.append((name, seed, err))
    out = {name: aggregate(runs) for name, runs in per_variant.items()}
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        combined = []
        for name, rows in out.items():
            os.makedirs(os.path.join(out_dir, name), exist_ok=True)
            _write_aggregate(os.path.join(out_dir, name, "aggregate.csv"), rows)
            combined += [[r[0], f"{name}/{r[1]}", *r[2:]] for r in rows]
        _write_aggregate(os.path.join(out_dir, "aggregate.csv"), combined)
        if failures:
            with open(os.path.join(out_dir, "failures.txt"), "w") as fh:
                for f in failures:
                    fh.write("%s seed=%s %s\n" % f)
    out["_failures"] = failures
    return out
