"""The Brownian variance controller on its own, then inside training.

The controller nudges sigma up when the learner succeeds more often than
R_pref and down when it struggles, by at most delta_max per period.
"""

import numpy as np

from region_grow.config import config_from_dict
from region_grow.orchestrator import train
from region_grow.sampler import SamplerConfig, update_variance

cfg = SamplerConfig()
sigma = 0.5
for r_avg in (0.9, 0.95, 1.0, 0.4, 0.1, 0.7):
    new = update_variance(sigma, r_avg, cfg)
    print(f"sigma {sigma:.2f}, r_avg {r_avg:.2f} -> {new:.2f}")
    sigma = new

# same start, different environments: the maze rewards wide exploration, while
# the reacher's actuators are strong enough that random pushes overshoot
learner = {"hidden": [32, 32], "epochs": 5}
for env in ("maze", "reacher"):
    res = train(config_from_dict({"env": env, "N": 50, "eval_every": 0, "learner": learner}))
    trace = [m.sigma for m in res.metrics]
    print(env, "mean sigma over 50 iterations:", round(float(np.mean(trace)), 3))
    print("  per period:", [round(s, 2) for s in trace[4::5]])
