"""``survstack`` command-line interface.

Subcommands::

    survstack fit DATA.csv [--config cfg.json] --out model.npz
    survstack predict model.npz NEW.csv --times 1,2,5 [--out pred.csv]
    survstack simulate --d lognormal --q linear --replicates 20 [--check]
    survstack evaluate DATA.csv PRED.csv

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure. ``SURVSTACK_WORKERS`` sets the default number of
worker processes for ``simulate``.
"""

from __future__ import annotations

import argparse
import csv
import io
import re
import sys
import warnings
from dataclasses import replace

import numpy as np

from .censor_weights import build_weight_table, km_censoring
from .dataio import (load_model, load_stack_config, read_covariates_csv, read_dataset_csv,
                     save_model)
from .exceptions import (CandidateFitError, ConfigError, ConvergenceError, DataError,
                         SurvStackError)
from .metrics import brier_ipcw_curve, integrated_brier
from .sim_bench import (FAMILIES, FORMS, SCENARIOS, check_orderings, default_workers,
                        run_scenario, scenario, write_csv, write_json)
from .stacker import CandidateSpec, StackConfig, default_candidates, fit_stack
from .surv_core import TimeGrid

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

_UNITS = {"days": 365.25, "months": 12.0, "years": 1.0}
_SUFFIX = {"d": 1 / 365.25, "m": 1 / 12.0, "y": 1.0}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for data errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_times(spec, unit="years"):
    """Parse ``"1,2.5,5y"`` into floats in the data's time unit.

    Bare numbers are taken as-is. A ``d``, ``m`` or ``y`` suffix gives a
    calendar duration that is converted using ``unit``, the unit in which
    the data's ``time`` column is recorded.
    """
    if unit not in _UNITS:
        raise _UsageError(f"--time-unit must be one of {sorted(_UNITS)}")
    out = []
    for tok in spec.split(","):
        tok = tok.strip()
        m = re.fullmatch(r"([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)([dmy]?)", tok)
        if not m:
            raise _UsageError(f"cannot parse time {tok!r}")
        v = float(m.group(1))
        if m.group(2):
            v *= _SUFFIX[m.group(2)] * _UNITS[unit]
        out.append(v)
    return np.array(out)


def _specs_and_config(args):
    if args.config:
        specs, cfg = load_stack_config(args.config)
    else:
        specs, cfg = default_candidates(), StackConfig()
    over = {k: getattr(args, k) for k in ("seed", "folds", "grid_size")
            if getattr(args, k) is not None}
    cfg = replace(cfg, **over)
    forest = {k: getattr(args, k) for k in ("n_trees", "min_node_events")
              if getattr(args, k) is not None}
    if forest:
        specs = [CandidateSpec(s.identifier, s.kind, {**s.params, **forest})
                 if s.kind == "rsf" else s for s in specs]
    return specs, cfg


def weights_report(model):
    """Deterministic text report of the stack weights and solver state."""
    w = model.weights
    width = max(len(i) for i in model.identifiers + ["candidate"])
    lines = [f"{'candidate':<{width}}  {'kind':<10}  alpha"]
    for spec, a in zip(model.specs, model.alpha):
        lines.append(f"{spec.identifier:<{width}}  {spec.kind:<10}  {a:.6f}")
    lines += [
        f"objective      {w.objective_value:.10g}",
        f"kkt_residual   {w.kkt_residual:.3e}",
        f"active_set     {' '.join(model.identifiers[k] for k in w.active_set)}",
        f"iterations     {w.n_iter}",
        f"grid           {' '.join(f'{t:.6g}' for t in model.grid.times)}",
    ]
    return "\n".join(lines) + "\n"


def cmd_fit(args):
    specs, cfg = _specs_and_config(args)
    data = read_dataset_csv(args.data)
    model = fit_stack(data, specs, cfg)
    save_model(model, args.out)
    report = weights_report(model)
    sys.stdout.write(report)
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(report)
    return EXIT_OK


def _time_label(t):
    return f"t={t:.10g}"


def cmd_predict(args):
    model = load_model(args.model)
    X = read_covariates_csv(args.newdata, model.covariate_names)
    times = parse_times(args.times, args.time_unit)
    if np.any(times < 0):
        raise _UsageError("prediction times must be non-negative")
    stacked = model.survival(X, times)
    header = ["row"] + [_time_label(t) for t in times]
    blocks = [stacked]
    if args.per_candidate:
        per = model.candidate_survival(X, times)
        for ident, s in zip(model.identifiers, per):
            header += [f"{ident}:{_time_label(t)}" for t in times]
            blocks.append(s)
    values = np.hstack(blocks)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for i, row in enumerate(values):
        writer.writerow([i] + [repr(float(v)) for v in row])
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_simulate(args):
    if args.all:
        pairs = list(SCENARIOS)
    elif args.d and args.q:
        pairs = [(args.d, args.q)]
    else:
        raise _UsageError("give --d and --q, or --all")
    over = {k: getattr(args, k) for k in ("replicates", "n", "seed")
            if getattr(args, k) is not None}
    specs = default_candidates(
        min_node_events=args.min_node_events if args.min_node_events is not None else 3,
        n_trees=args.n_trees if args.n_trees is not None else 250)
    workers = args.workers if args.workers is not None else default_workers()
    results = []
    for d, q in pairs:
        res = run_scenario(scenario(d, q, **over), specs, workers=workers)
        results.append(res)
        mean, se = res.mean_isse(), res.se_isse()
        print(f"{res.config.label}  replicates={len(res.replicates_ok)} "
              f"failed={len(res.failures)}  censored={res.mean_censored:.3f}")
        for e in res.estimators:
            a = res.mean_alpha().get(e)
            extra = f"  alpha={a:.3f}" if a is not None else ""
            print(f"  {e:<10} isse_x10={10 * mean[e]:.4f} (se {10 * se[e]:.4f}){extra}")
    checks = check_orderings(results)
    if args.out:
        write_csv(results, args.out)
    if args.json:
        write_json(results, args.json, checks)
    if args.check:
        for name, ok, detail in checks:
            print(f"{'PASS' if ok else 'FAIL'}  {name}  ({detail})")
        if not all(ok for _, ok, _ in checks):
            return EXIT_NUMERIC
    return EXIT_OK


def _read_predictions(path, n):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: file is empty")
    header = rows[0]
    cols = [j for j, h in enumerate(header) if h.startswith("t=")]
    if not cols:
        raise DataError(f"{path}: no prediction columns named 't=<time>'")
    times = np.array([float(header[j][2:]) for j in cols])
    if len(rows) - 1 != n:
        raise DataError(f"{path}: {len(rows) - 1} prediction rows for {n} subjects")
    try:
        pred = np.array([[float(r[j]) for j in cols] for r in rows[1:]])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed prediction value ({exc})") from None
    order = np.argsort(times)
    return times[order], pred[:, order]


def cmd_evaluate(args):
    data = read_dataset_csv(args.data)
    times, pred = _read_predictions(args.predictions, data.n)
    if np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise DataError("evaluation times must be positive and distinct")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        wtab = build_weight_table(data, km_censoring(data), TimeGrid(times))
    curve = brier_ipcw_curve(wtab, pred)
    print("time  brier")
    for t, b in zip(times, curve):
        print(f"{t:.6g}  {b:.6f}")
    print(f"ibs  {integrated_brier(wtab, pred):.6f}")
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return EXIT_OK


def build_parser():
    p = _Parser(prog="survstack", description="Stacked survival models.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    f = sub.add_parser("fit", help="fit a stacked model to a CSV dataset")
    f.add_argument("data")
    f.add_argument("--config", help="JSON stack configuration")
    f.add_argument("--out", required=True, help="output model file (.npz)")
    f.add_argument("--report", help="also write the weights report here")
    f.add_argument("--seed", type=int)
    f.add_argument("--folds", type=int)
    f.add_argument("--grid-size", type=int)
    f.add_argument("--n-trees", type=int)
    f.add_argument("--min-node-events", type=int)
    f.set_defaults(func=cmd_fit)

    r = sub.add_parser("predict", help="predict survival probabilities")
    r.add_argument("model")
    r.add_argument("newdata")
    r.add_argument("--times", required=True, help="comma list, e.g. 1,2.5 or 5y")
    r.add_argument("--time-unit", default="years", choices=sorted(_UNITS),
                   help="unit of the data's time column (for d/m/y suffixes)")
    r.add_argument("--per-candidate", action="store_true")
    r.add_argument("--out")
    r.set_defaults(func=cmd_predict)

    s = sub.add_parser("simulate", help="run simulation scenarios")
    s.add_argument("--d", choices=FAMILIES)
    s.add_argument("--q", choices=FORMS)
    s.add_argument("--all", action="store_true", help="all six scenarios")
    s.add_argument("--replicates", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--n-trees", type=int)
    s.add_argument("--min-node-events", type=int)
    s.add_argument("--out", help="results table (CSV)")
    s.add_argument("--json", help="machine-readable summary")
    s.add_argument("--check", action="store_true",
                   help="exit nonzero if an expected ordering fails")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("evaluate", help="IPCW Brier scores of a prediction file")
    e.add_argument("data")
    e.add_argument("predictions")
    e.set_defaults(func=cmd_evaluate)
    return p


def _exit_code(exc):
    if isinstance(exc, CandidateFitError):
        return _exit_code(exc.cause) if isinstance(exc.cause, BaseException) else EXIT_NUMERIC
    if isinstance(exc, (_UsageError, ConfigError)):
        return EXIT_USAGE
    if isinstance(exc, (DataError, OSError)):
        return EXIT_DATA
    if isinstance(exc, (ConvergenceError, np.linalg.LinAlgError, FloatingPointError)):
        return EXIT_NUMERIC
    return EXIT_NUMERIC


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (_UsageError, SurvStackError, OSError, np.linalg.LinAlgError) as exc:
        print(f"survstack {args.command}: error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
