"""Core data types: censored samples, step survival curves and time grids."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import DataError

__all__ = [
    "SurvivalDataset",
    "StepSurvivalCurve",
    "TimeGrid",
    "empirical_quantiles",
    "event_time_grid",
    "evaluate_curve",
    "validate_curve",
]


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SurvivalDataset:
    """Right-censored observations ``(time, event, covariates)``.

    Parameters
    ----------
    observed_time : array_like, shape (n,)
        Follow-up time ``min(T, C)``; must be strictly positive.
    event_indicator : array_like of bool, shape (n,)
        True when the event was observed, False when censored.
    covariates : array_like, shape (n, p)
        Baseline covariates. A 1-d input is treated as a single column.
    covariate_names : sequence of str, optional
        Column labels; defaults to ``x0, x1, ...``.

    Notes
    -----
    All arrays are copied and marked read-only on construction.
    """

    observed_time: np.ndarray
    event_indicator: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple = field(default=())

    def __post_init__(self):
        time = np.asarray(self.observed_time, dtype=float)
        event = np.asarray(self.event_indicator)
        if event.dtype != bool:
            if not np.all(np.isin(event, (0, 1))):
                raise DataError("event indicator must be 0/1 or boolean")
            event = event.astype(bool)
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if time.ndim != 1:
            raise DataError("observed_time must be one-dimensional")
        n = time.shape[0]
        if n == 0:
            raise DataError("empty dataset")
        if event.shape != (n,):
            raise DataError(
                f"event indicator has length {event.shape[0]}, expected {n}")
        if x.ndim != 2 or x.shape[0] != n:
            raise DataError(f"covariate matrix must have {n} rows, got shape {x.shape}")
        if not np.all(np.isfinite(time)) or np.any(time <= 0):
            raise DataError("all observed times must be finite and > 0")
        if not np.all(np.isfinite(x)):
            raise DataError("covariate matrix has missing or non-finite entries")
        if not event.any():
            raise DataError("dataset contains no observed events")
        names = tuple(self.covariate_names) or tuple(f"x{j}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataError(
                f"{len(names)} covariate names given for {x.shape[1]} columns")
        object.__setattr__(self, "observed_time", _frozen(time, float))
        object.__setattr__(self, "event_indicator", _frozen(event, bool))
        object.__setattr__(self, "covariates", _frozen(x, float))
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.observed_time.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.event_indicator.sum())

    @property
    def event_times(self) -> np.ndarray:
        """Observed (uncensored) event times, in row order."""
        return self.observed_time[self.event_indicator]

    def subset(self, index) -> "SurvivalDataset":
        """Return the rows selected by ``index`` (integer or boolean array)."""
        index = np.asarray(index)
        return SurvivalDataset(self.observed_time[index], self.event_indicator[index],
                               self.covariates[index], self.covariate_names)


class StepSurvivalCurve:
    """Right-continuous non-increasing step function starting at 1.

    Parameters
    ----------
    jump_times : array_like
        Times at which the curve may jump. Duplicates are merged, keeping
        the value listed last.
    values : array_like
        Curve value at and after each jump time.
    """

    def __init__(self, jump_times, values):
        t = np.asarray(jump_times, dtype=float).ravel()
        v = np.asarray(values, dtype=float).ravel()
        if t.shape != v.shape:
            raise DataError("jump_times and values must have equal length")
        if t.size:
            order = np.argsort(t, kind="stable")
            t, v = t[order], v[order]
            # keep the last value of each run of tied times
            last = np.r_[t[1:] != t[:-1], True]
            t, v = t[last], v[last]
        self.jump_times = _frozen(t, float)
        self.values = _frozen(v, float)

    def __call__(self, t, side="right"):
        return evaluate_curve(self, t, side)

    def __repr__(self):
        return f"StepSurvivalCurve(n_jumps={self.jump_times.size})"


def evaluate_curve(curve: StepSurvivalCurve, t, side: str = "right"):
    """Evaluate a step survival curve.

    ``side="right"`` gives ``S(t)``; ``side="left"`` gives the limit from
    below ``S(t-)``. Scalars in, scalar out; arrays broadcast.
    """
    if side not in ("right", "left"):
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    t_arr = np.asarray(t, dtype=float)
    idx = np.searchsorted(curve.jump_times, t_arr, side="right" if side == "right" else "left")
    padded = np.r_[1.0, curve.values]
    out = padded[idx]
    return float(out) if out.ndim == 0 else out


def validate_curve(curve: StepSurvivalCurve, atol: float = 1e-12) -> None:
    """Raise ``DataError`` unless the curve is a valid survival function."""
    v = curve.values
    if np.any(v < -atol) or np.any(v > 1 + atol):
        raise DataError("survival values outside [0, 1]")
    if np.any(np.diff(np.r_[1.0, v]) > atol):
        raise DataError("survival curve increases")
    if abs(curve(0.0) - 1.0) > atol:
        raise DataError("S(0) != 1")


class TimeGrid:
    """Strictly increasing positive evaluation times ``t_1 < ... < t_s``."""

    def __init__(self, times):
        t = np.asarray(times, dtype=float).ravel()
        if t.size == 0:
            raise DataError("time grid is empty")
        if np.any(t <= 0) or not np.all(np.isfinite(t)):
            raise DataError("grid times must be finite and > 0")
        if np.any(np.diff(t) <= 0):
            raise DataError("grid times must be strictly increasing")
        self.times = _frozen(t, float)

    def __len__(self):
        return self.times.size

    def __iter__(self):
        return iter(self.times)

    def __array__(self, dtype=None, copy=None):
        return self.times if dtype is None else self.times.astype(dtype)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.times, other.times)

    def __repr__(self):
        return f"TimeGrid({self.times.tolist()})"

    def check_within(self, max_time: float) -> None:
        """Raise unless every grid time lies strictly inside ``(0, max_time)``."""
        if self.times[-1] >= max_time:
            raise DataError(
                f"grid time {self.times[-1]} is not inside the follow-up range (0, {max_time})")


def empirical_quantiles(values: Sequence[float], probs: Sequence[float]) -> np.ndarray:
    """Inverse empirical CDF quantiles.

    For each ``p`` the smallest order statistic ``x_(k)`` with
    ``k / n >= p`` is returned, so every quantile is an observed value.

    Parameters
    ----------
    values : array_like
        Sample, in any order.
    probs : array_like
        Probabilities in (0, 1), strictly increasing.

    Returns
    -------
    numpy.ndarray
        One quantile per probability.
    """
    x = np.sort(np.asarray(values, dtype=float).ravel())
    p = np.asarray(probs, dtype=float).ravel()
    if x.size == 0:
        raise DataError("empty sample")
    if np.any(p <= 0) or np.any(p >= 1):
        raise ValueError("probabilities must lie in (0, 1)")
    if np.any(np.diff(p) <= 0):
        raise ValueError("probabilities must be strictly increasing")
    n = x.size
    # guard against n*p landing a hair above an integer, e.g. 10*0.3
    k = np.ceil(n * p - 1e-9 * n).astype(int)
    return x[np.clip(k, 1, n) - 1]


def event_time_grid(data: SurvivalDataset, count: int = 9) -> TimeGrid:
    """Quantiles of the observed event times at ``1/(count+1), ..., count/(count+1)``."""
    if count < 1:
        raise ValueError("count must be positive")
    events = data.event_times
    if events.size < count:
        raise DataError(
            f"dataset has {events.size} observed events; at least {count} are needed "
            "for the event-time grid")
    probs = np.arange(1, count + 1) / (count + 1)
    q = np.unique(empirical_quantiles(events, probs))
    return TimeGrid(q)
