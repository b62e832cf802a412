"""Watch the reachability region spread out of the maze corridor.

The seed sits at the closed end of the corridor. Each sampling period keeps
the states of intermediate difficulty, archives them and grows new ones by
Brownian motion. Writes ``maze_region.csv`` (iteration, set, x, y) for plotting.
Takes about a minute.
"""

import csv

import numpy as np

from region_grow.config import config_from_dict
from region_grow.orchestrator import train

cfg = config_from_dict({"env": "maze", "N": 60, "eval_every": 20, "learner": {"hidden": [32, 32], "epochs": 5}})
res = train(cfg)

for snap in res.snapshots[::3]:
    arch = np.array([r["goal"] for r in snap if r["set"] == "archive"])
    out_of_corridor = np.mean(arch[:, 0] < 0.3 * cfg.env_config.get("h_table", 1.0))
    print(f"iteration {snap[0]['iteration']:3d}: {len(arch):4d} archived, {out_of_corridor:.0%} left of the corridor mouth")

for m in res.metrics[::10]:
    print(f"iter {m.iteration:3d} r_avg {m.r_avg:.2f} sigma {m.sigma:.2f}")

with open("maze_region.csv", "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["iteration", "set", "x", "y"])
    for snap in res.snapshots:
        for r in snap:
            w.writerow([r["iteration"], r["set"], *r["goal"]])
print("wrote maze_region.csv")
