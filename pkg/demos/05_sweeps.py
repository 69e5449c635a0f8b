"""Load and packet-size sweeps on Abilene (tabular output, no plotting).

Sweep 1 scales every input rate by a common factor and tracks how the
congestion-blind placement heuristic falls behind GP as the network
congests (its unsplit plans eventually exceed queue capacities outright).

Sweep 2 fixes the result packet size to 1 and sweeps the data size: the
bigger the data packets relative to results, the closer to the sources GP
places the first computation (H_data drops).
"""

import math
import os
import tempfile

from chainflow import median, rate_scale_sweep, size_ratio_sweep, table_row
from chainflow.experiments import write_records_csv

out_dir = os.path.join(tempfile.gettempdir(), "chainflow_sweeps")
os.makedirs(out_dir, exist_ok=True)
spec = table_row("abilene")
seeds = (1, 2, 3)

print("=== rate sweep: T_lpr-sc / T_gp as congestion grows")
# start well below the benchmark load: the heuristic's advantage gap widens
# smoothly until its unsplit plans stop fitting the queues at all
factors = (0.15, 0.2, 0.3, 0.4, 0.5)
records = rate_scale_sweep(spec, factors=factors, seeds=seeds,
                           algorithms=("gp", "lpr-sc"),
                           gp={"tol": 1e-4, "max_iters": 2000})
write_records_csv(records, os.path.join(out_dir, "rate_sweep.csv"))
for f in factors:
    ratios = []
    for seed in seeds:
        row = {r["algorithm"]: r["T"] for r in records
               if r["sweep"] == f and r["seed"] == seed}
        ratios.append(row["lpr-sc"] / row["gp"])
    m = median(ratios)
    print(f"  factor {f:4.2f}: median ratio "
          f"{'inf (heuristic saturates a queue)' if math.isinf(m) else f'{m:.2f}'}")

print("\n=== size sweep: where does the first computation happen?")
records = size_ratio_sweep(spec, ratios=(0.5, 1, 2, 4, 8), seeds=seeds,
                           gp={"tol": 1e-4, "max_iters": 2000})
write_records_csv(records, os.path.join(out_dir, "size_sweep.csv"))
for ratio in (0.5, 1, 2, 4, 8):
    h_data = median([r["H_data"] for r in records if r["sweep"] == ratio])
    h_res = median([r["H_result"] for r in records if r["sweep"] == ratio])
    print(f"  data/result = {ratio:4.1f}: H_data {h_data:5.2f} hops, "
          f"H_result {h_res:5.2f} hops")

print(f"\nCSV records in {out_dir}")
