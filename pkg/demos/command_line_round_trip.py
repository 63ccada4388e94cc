"""Drive the command line tool end to end.

Writes a simulated dataset to CSV, then runs ``survstack fit``,
``survstack predict`` and ``survstack evaluate`` on it, the same calls a
shell user would make. Files go to a temporary directory.

    python3 demos/command_line_round_trip.py
"""

import csv
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import numpy as np

from survstack.sim_bench import calibrate_censoring, scenario, simulate_dataset

work = Path(tempfile.mkdtemp(prefix="survstack-demo-"))
cfg = scenario("weibull", "linear", n=250)
train, _, _ = simulate_dataset(cfg, calibrate_censoring(cfg), np.random.default_rng(3))

with open(work / "train.csv", "w", newline="") as fh:
    w = csv.writer(fh)
    w.writerow(["time", "event", *train.covariate_names])
    for t, e, x in zip(train.observed_time, train.event_indicator, train.covariates):
        w.writerow([float(t), int(e), *map(float, x)])

(work / "stack.json").write_text(json.dumps({
    "candidates": [{"id": "weibull", "kind": "weibull"},
                   {"id": "cox", "kind": "cox", "params": {"ties": "efron"}},
                   {"id": "rsf", "kind": "rsf", "params": {"n_trees": 100}}],
    "folds": 5, "grid_size": 9, "seed": 7}, indent=2))


def survstack(*args):
    cmd = [sys.executable, "-m", "survstack.cli", *map(str, args)]
    print("$ survstack", " ".join(map(str, args)))
    done = subprocess.run(cmd, capture_output=True, text=True)
    print(done.stdout + done.stderr, end="")
    print(f"[exit {done.returncode}]\n")


survstack("fit", work / "train.csv", "--config", work / "stack.json", "--out", work / "m.npz")
survstack("predict", work / "m.npz", work / "train.csv", "--times", "0.5,1,2",
          "--out", work / "pred.csv")
print((work / "pred.csv").read_text().splitlines()[:3], "\n")
survstack("evaluate", work / "train.csv", work / "pred.csv")

# Errors name the problem and exit with a data-error status.
(work / "broken.csv").write_text("time,event,x1\n1.5,1,0.2\n0,1,0.1\n2.0,yes,0.3\n")
survstack("fit", work / "broken.csv", "--out", work / "never.npz")
print("files in", work)
