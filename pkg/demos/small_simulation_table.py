"""A small version of the simulation table.

Runs every scenario with a handful of replicates and prints mean ISSE
(x10) with Monte-Carlo standard errors and the mean stacking weights.
The acceptance suite runs the same thing with 200 replicates.

    python3 demos/small_simulation_table.py [replicates]
"""

import sys

from survstack.sim_bench import SCENARIOS, check_orderings, run_scenario, scenario

replicates = int(sys.argv[1]) if len(sys.argv) > 1 else 10
results = []
for d, q in SCENARIOS:
    res = run_scenario(scenario(d, q, replicates=replicates))
    results.append(res)
    mean, se, alpha = res.mean_isse(), res.se_isse(), res.mean_alpha()
    cells = "  ".join(f"{e}={10 * mean[e]:.2f}({10 * se[e]:.2f})" for e in res.estimators)
    print(f"{res.config.label:<20} {cells}")
    print(f"{'':<20} weights: " + "  ".join(f"{k}={v:.2f}" for k, v in alpha.items()))

# With few replicates some orderings can fail by chance; the standard
# errors above say how much to trust each one.
print()
for name, ok, detail in check_orderings(results):
    print(f"{'ok ' if ok else 'NO '} {name}  [{detail}]")
