"""Benchmark-style comparison: GP against the three baselines.

Runs a handful of the benchmark rows over a few seeds and prints the
normalized cost table (worst feasible algorithm = 1.0), the shape of the
full evaluation study. Baselines that saturate a queue capacity are reported
as infeasible -- that is how congestion-blind plans actually fail.
"""

import math

from chainflow import ExperimentConfig, median, run_experiment

config = ExperimentConfig(
    scenarios=["balanced-tree", "abilene", "lhc"],
    seeds=[1, 2, 3],
    gp={"tol": 1e-5, "max_iters": 2000})
records = run_experiment(config)

algos = ("gp", "spoc", "lcof", "lpr-sc")
print(f"{'scenario':<14}" + "".join(f"{a:>10}" for a in algos) + "   (median normalized cost)")
for name in ("balanced-tree", "abilene", "lhc"):
    meds = {}
    for a in algos:
        vals = [r["T_norm"] for r in records
                if r["scenario"] == name and r["algorithm"] == a]
        vals = [v for v in vals if not math.isnan(v)]
        meds[a] = median(vals) if vals else math.inf
    cells = "".join(f"{meds[a]:>10.3f}" if math.isfinite(meds[a]) else f"{'inf':>10}"
                    for a in algos)
    print(f"{name:<14}{cells}")

print("\nper-seed raw costs on abilene:")
for seed in (1, 2, 3):
    row = {r["algorithm"]: r["T"] for r in records
           if r["scenario"] == "abilene" and r["seed"] == seed}
    print(f"  seed {seed}: " + "  ".join(
        f"{a}={row[a]:.3f}" if math.isfinite(row[a]) else f"{a}=inf" for a in algos))
