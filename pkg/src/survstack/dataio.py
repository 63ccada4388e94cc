"""CSV ingestion, stack configuration files and model persistence.

Data files have a header row with a ``time`` column, an ``event`` column
coded 0/1, and any number of numeric covariate columns, which are used in
header order. Fitted stacks are stored as ``.npz`` containers holding a
JSON metadata record (format version, training schema, candidate specs,
weights) next to the numeric arrays of every candidate fit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict

import numpy as np

from .aft_models import AftFit
from .cox_model import CoxFit
from .exceptions import ConfigError, DataError
from .stacker import CandidateSpec, StackConfig, StackedModel, StackWeights, _check_specs
from .surv_core import SurvivalDataset, TimeGrid
from .surv_forest import ForestConfig, SurvivalForest

__all__ = ["read_dataset_csv", "read_covariates_csv", "load_stack_config",
           "save_model", "load_model", "FORMAT_VERSION"]

FORMAT_VERSION = 1
_FORMAT_NAME = "survstack-model"
_RESERVED = ("time", "event")


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        rows = [(reader.line_num, row) for row in reader if any(c.strip() for c in row)]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    return header, rows


def _parse_numeric(path, header, rows, columns):
    """Parse ``columns`` of every row as floats, collecting every bad line."""
    pos = [header.index(c) for c in columns]
    out = np.full((len(rows), len(columns)), np.nan)
    problems = []
    for r, (line, row) in enumerate(rows):
        if len(row) != len(header):
            problems.append(f"line {line}: expected {len(header)} fields, found {len(row)}")
            continue
        for j, (c, p) in enumerate(zip(columns, pos)):
            try:
                v = float(row[p])
            except ValueError:
                problems.append(f"line {line}: column {c!r} is not numeric ({row[p]!r})")
                continue
            if not math.isfinite(v):
                problems.append(f"line {line}: column {c!r} is missing or not finite")
            out[r, j] = v
    return out, problems


def _fail(path, problems):
    lines = {p.split(":")[0] for p in problems}
    raise DataError(f"{path}: {len(lines)} malformed line(s)\n  " + "\n  ".join(problems))


def read_dataset_csv(path) -> SurvivalDataset:
    """Load a right-censored dataset. Every malformed line is reported."""
    header, rows = _read_rows(path)
    missing = [c for c in _RESERVED if c not in header]
    if missing:
        raise DataError(f"{path}: required column(s) missing: {missing}")
    if not rows:
        raise DataError(f"{path}: no data rows")
    covs = [h for h in header if h not in _RESERVED]
    values, problems = _parse_numeric(path, header, rows, ["time", "event", *covs])
    for r, (line, row) in enumerate(rows):
        if len(row) != len(header):
            continue
        t, e = values[r, 0], values[r, 1]
        if math.isfinite(t) and t <= 0:
            problems.append(f"line {line}: time must be positive ({row[header.index('time')]})")
        if math.isfinite(e) and e not in (0.0, 1.0):
            problems.append(f"line {line}: event must be 0 or 1 ({row[header.index('event')]})")
    if problems:
        _fail(path, sorted(problems, key=lambda s: int(s.split(":")[0][5:])))  # stable by line
    return SurvivalDataset(values[:, 0], values[:, 1] == 1.0, values[:, 2:], tuple(covs))


def read_covariates_csv(path, names) -> np.ndarray:
    """Covariate matrix with columns matched to ``names`` by header name.

    ``time`` and ``event`` columns are ignored when present; any other
    column not in ``names`` is an error, as is any missing name.
    """
    header, rows = _read_rows(path)
    present = [h for h in header if h not in _RESERVED]
    missing = [n for n in names if n not in present]
    extra = [h for h in present if h not in names]
    if missing or extra:
        raise DataError(f"{path}: covariate columns do not match the training schema; "
                        f"missing {missing}, unexpected {extra}")
    values, problems = _parse_numeric(path, header, rows, list(names))
    if problems:
        _fail(path, problems)
    return values


def load_stack_config(source) -> tuple[list, StackConfig]:
    """Parse a stack configuration from a JSON file path or a dict.

    Keys: ``candidates`` (list of ``{"id", "kind", "params"}``),
    ``grid_size``, ``folds``, ``seed`` and ``censoring`` (only ``"km"``).
    """
    if isinstance(source, dict):
        raw = source
    else:
        try:
            with open(source) as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{source}: invalid JSON ({exc})") from None
    allowed = {"candidates", "grid_size", "folds", "seed", "censoring"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    if raw.get("censoring", "km") != "km":
        raise ConfigError("only the marginal Kaplan-Meier censoring estimator ('km') is supported")
    specs = []
    for item in raw.get("candidates", []):
        if not isinstance(item, dict) or "kind" not in item:
            raise ConfigError(f"candidate entry needs a 'kind': {item!r}")
        specs.append(CandidateSpec(str(item.get("id", item["kind"])), str(item["kind"]),
                                   dict(item.get("params", {}))))
    _check_specs(specs)
    cfg = StackConfig(**{k: int(raw[k]) for k in ("grid_size", "folds", "seed") if k in raw})
    return specs, cfg


def _fit_payload(fit):
    if isinstance(fit, AftFit):
        return {"type": "aft", "family": fit.family}, fit.to_arrays()
    if isinstance(fit, CoxFit):
        return {"type": "cox", "ties": fit.ties}, fit.to_arrays()
    if isinstance(fit, SurvivalForest):
        return {"type": "forest", "config": asdict(fit.config)}, fit.to_arrays()
    raise ConfigError(f"cannot persist candidate fit of type {type(fit).__name__}")


def _fit_from_payload(meta, arrays):
    kind = meta["type"]
    if kind == "aft":
        return AftFit.from_arrays(meta["family"], arrays)
    if kind == "cox":
        return CoxFit.from_arrays(meta["ties"], arrays)
    if kind == "forest":
        return SurvivalForest.from_arrays(ForestConfig(**meta["config"]), arrays)
    raise DataError(f"unknown fit type {kind!r} in model file")


def save_model(model: StackedModel, path):
    """Write ``model`` to an ``.npz`` container."""
    from . import __version__

    fits_meta, arrays = [], {}
    for k, fit in enumerate(model.fits):
        meta, arr = _fit_payload(fit)
        fits_meta.append(meta)
        for name, value in arr.items():
            arrays[f"fit{k}/{name}"] = np.asarray(value)
    w = model.weights
    meta = {
        "format": _FORMAT_NAME,
        "format_version": FORMAT_VERSION,
        "package_version": __version__,
        "covariate_names": list(model.covariate_names),
        "candidates": [{"id": s.identifier, "kind": s.kind, "params": dict(s.params)}
                       for s in model.specs],
        "fits": fits_meta,
        "objective_value": w.objective_value,
        "kkt_residual": w.kkt_residual,
        "active_set": list(w.active_set),
        "n_iter": w.n_iter,
    }
    arrays["alpha"] = np.asarray(w.alpha)
    arrays["grid"] = np.asarray(model.grid.times)
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> StackedModel:
    """Read a model written by :func:`save_model`."""
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
    except (OSError, ValueError) as exc:
        raise DataError(f"{path}: not a readable model file ({exc})") from None
    if "meta" not in arrays:
        raise DataError(f"{path}: model metadata missing")
    meta = json.loads(arrays["meta"].tobytes().decode())
    if meta.get("format") != _FORMAT_NAME:
        raise DataError(f"{path}: not a survstack model file")
    if meta["format_version"] > FORMAT_VERSION:
        raise DataError(f"{path}: format version {meta['format_version']} is newer than "
                        f"supported version {FORMAT_VERSION}")
    specs = [CandidateSpec(c["id"], c["kind"], c["params"]) for c in meta["candidates"]]
    fits = []
    for k, fmeta in enumerate(meta["fits"]):
        prefix = f"fit{k}/"
        sub = {name[len(prefix):]: v for name, v in arrays.items() if name.startswith(prefix)}
        fits.append(_fit_from_payload(fmeta, sub))
    weights = StackWeights(arrays["alpha"], meta["objective_value"], meta["kkt_residual"],
                           tuple(meta["active_set"]), meta["n_iter"])
    return StackedModel(specs, fits, weights, TimeGrid(arrays["grid"]), meta["covariate_names"])
