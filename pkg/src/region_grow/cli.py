"""Command-line entry point: ``region-grow {train,eval,suite,export-region,plot-data}``.

Exit codes: 0 success, 1 usage or config error, 2 training halted by divergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys

import numpy as np

from .config import ConfigError, config_from_dict, load_config
from .envs import ENV_NAMES, make_env
from .learner import load_checkpoint
from .orchestrator import evaluate, read_metrics, run_suite, train

log = logging.getLogger("region_grow")

LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
EXIT_OK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2


class UsageError(Exception):
    pass


def _setup_logging():
    name = os.environ.get("REGION_GROW_LOG", "info").lower()
    if name not in LOG_LEVELS:
        raise UsageError(f"REGION_GROW_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}")
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load(path) -> "TrainConfig":  # noqa: F821
    if not os.path.isfile(path):
        raise UsageError(f"config file not found: {path}")
    try:
        return load_config(path)
    except ConfigError as exc:
        raise UsageError(f"{path}: {exc}") from exc


# -- train / eval --------------------------------------------------------------
def cmd_train(args) -> int:
    cfg = _load(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    out = args.out or cfg.output_dir
    if not out:
        raise UsageError("train needs --out (or output_dir in the config)")
    res = train(cfg, out)
    if res.diverged:
        print(f"diverged: {res.divergence_report}", file=sys.stderr)
        return EXIT_DIVERGED
    last = res.metrics[-1]
    print(f"iterations={last.iteration} r_avg={last.r_avg} eval_success={last.eval_success}")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.pairs < 1:
        raise UsageError("--pairs must be >= 1")
    try:
        params, _ = load_checkpoint(args.checkpoint)
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot load checkpoint {args.checkpoint}: {exc}") from exc
    env = make_env(args.env)
    spec = env.spec
    want = spec.state_dim + spec.goal_dim
    if params.arch.input_dim != want or params.arch.output_dim != spec.action_dim:
        raise UsageError(
            f"checkpoint dimensions (in={params.arch.input_dim}, out={params.arch.output_dim}) do not match "
            f"{args.env} (in={want}, out={spec.action_dim})"
        )
    rng = np.random.default_rng(args.seed)
    rate = evaluate(params, env, args.pairs, rng)
    print(f"success_rate={rate}")
    return EXIT_OK


# -- suites --------------------------------------------------------------------
def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "walls":
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_suite(doc: dict) -> tuple:
    """``{"base": {...}, "variants": {name: overrides}, "seeds": [...]}`` -> ``(variants, seeds)``.

    A plain training config is accepted as a single variant named ``default``.
    """
    if not isinstance(doc, dict):
        raise ConfigError("suite config must be a JSON object")
    if "variants" not in doc:
        return {"default": config_from_dict(doc)}, None
    unknown = sorted(set(doc) - {"base", "variants", "seeds"})
    if unknown:
        raise ConfigError(f"unknown suite keys: {unknown}", unknown[0])
    base = doc.get("base", {})
    if not doc["variants"]:
        raise ConfigError("suite needs at least one variant", "variants")
    variants = {}
    for name, over in doc["variants"].items():
        try:
            variants[name] = config_from_dict(_merge(base, over))
        except ConfigError as exc:
            raise ConfigError(f"variant {name!r}: {exc}", exc.key) from exc
    return variants, doc.get("seeds")


def _parse_seeds(text: str) -> list:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise UsageError(f"--seeds must be a comma-separated list of integers, got {text!r}") from exc
    if not seeds:
        raise UsageError("--seeds is empty")
    return seeds


def cmd_suite(args) -> int:
    if not os.path.isfile(args.config):
        raise UsageError(f"config file not found: {args.config}")
    with open(args.config) as fh:
        text = fh.read()
    try:
        variants, seeds = parse_suite(json.loads(text))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}: line {exc.lineno}: invalid JSON: {exc.msg}") from exc
    except ConfigError as exc:
        raise UsageError(f"{args.config}: {exc}") from exc
    if args.seeds:
        seeds = _parse_seeds(args.seeds)
    if not seeds:
        raise UsageError("no seeds given (use --seeds or a 'seeds' list in the config)")
    res = run_suite(variants, seeds, args.out, jobs=args.jobs)
    for name, seed, err in res["_failures"]:
        print(f"run failed: {name} seed={seed}: {err}", file=sys.stderr)
    print(f"variants={len(variants)} seeds={len(seeds)} failures={len(res['_failures'])}")
    return EXIT_OK


# -- data export -----------------------------------------------------------------
def _read_snapshots(run_dir) -> list:
    path = os.path.join(run_dir, "region.jsonl")
    if not os.path.isfile(path) or os.path.getsize(path) == 0:
        raise UsageError(f"{run_dir} has no region snapshots (uniform-mode run or not a run directory)")
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def cmd_export_region(args) -> int:
    recs = _read_snapshots(args.run)
    iters = sorted({r["iteration"] for r in recs})
    it = iters[-1] if args.iteration is None else args.iteration
    if it not in iters:
        raise UsageError(f"no snapshot at iteration {it}; available: {iters[0]}..{iters[-1]}")
    out = os.path.join(args.run, f"region_iter_{it:06d}.jsonl")
    with open(out, "w") as fh:
        for r in recs:
            if r["iteration"] == it:
                fh.write(json.dumps(r) + "\n")
    print(out)
    return EXIT_OK


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_plot_data(args) -> int:
    run = args.run
    agg = os.path.join(run, "aggregate.csv")
    metrics = os.path.join(run, "metrics.csv")
    if args.what == "region":
        recs = _read_snapshots(run)
        g_dim = len(recs[0]["goal"])
        header = ["iteration", "set", "mean_reward", *[f"g{k}" for k in range(g_dim)]]
        rows = [
            [r["iteration"], r["set"], "" if r["mean_reward"] is None else repr(r["mean_reward"]), *map(repr, r["goal"])]
            for r in recs
        ]
        out = os.path.join(run, "plot_region.csv")
        _write_csv(out, header, rows)
    elif os.path.isfile(metrics):
        rows = read_metrics(metrics)
        if args.what == "variance":
            if not any(r["sigma"] for r in rows):
                raise UsageError(f"{metrics} has no sigma values (uniform-mode run)")
            out = os.path.join(run, "plot_variance.csv")
            _write_csv(out, ["iteration", "sigma"], [[r["iteration"], r["sigma"]] for r in rows])
        else:
            out = os.path.join(run, "plot_curves.csv")
            _write_csv(
                out,
                ["iteration", "r_avg", "eval_success"],
                [[r["iteration"], r["r_avg"], r["eval_success"]] for r in rows],
            )
    elif os.path.isfile(agg):
        with open(agg, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if args.what == "variance":
            body = [r for r in body if r[1].split("/")[-1] == "sigma"]
        out = os.path.join(run, f"plot_{args.what}.csv")
        _write_csv(out, header, body)
    else:
        raise UsageError(f"{run} contains neither metrics.csv nor aggregate.csv")
    print(out)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="region-grow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one training job")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on uniform start/goal pairs")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--env", required=True, choices=ENV_NAMES)
    e.add_argument("--pairs", type=int, default=200)
    e.add_argument("--seed", type=int, default=0, help="seed for drawing evaluation pairs")
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("suite", help="train every variant for every seed and aggregate")
    s.add_argument("--config", required=True)
    s.add_argument("--seeds", help="comma-separated seeds, overrides the config's list")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=int, default=1)
    s.set_defaults(func=cmd_suite)

    x = sub.add_parser("export-region", help="write one region snapshot from a run")
    x.add_argument("--run", required=True)
    x.add_argument("--iteration", type=int)
    x.set_defaults(func=cmd_export_region)

    d = sub.add_parser("plot-data", help="emit plot-ready CSV files")
    d.add_argument("--run", required=True)
    d.add_argument("--what", required=True, choices=("curves", "variance", "region"))
    d.set_defaults(func=cmd_plot_data)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors; 2 is reserved for divergence
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        _setup_logging()
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
