"""Censoring survival estimate and inverse-probability-of-censoring weights."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .surv_core import StepSurvivalCurve, SurvivalDataset, TimeGrid

__all__ = ["IpcwWeightTable", "km_censoring", "kaplan_meier", "build_weight_table"]


def kaplan_meier(time, event) -> StepSurvivalCurve:
    """Product-limit estimate of ``P(T > t)``.

    The risk set at ``t`` is ``{i : time_i >= t}``; the curve jumps only at
    times where ``event`` is true.
    """
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    uniq, inv = np.unique(time, return_inverse=True)
    d = np.bincount(inv, weights=event, minlength=uniq.size)
    n_at = np.bincount(inv, minlength=uniq.size)
    at_risk = np.cumsum(n_at[::-1])[::-1]
    keep = d > 0
    surv = np.cumprod(1.0 - d[keep] / at_risk[keep])
    return StepSurvivalCurve(uniq[keep], surv)


def km_censoring(data: SurvivalDataset) -> StepSurvivalCurve:
    """Marginal Kaplan-Meier estimate of the censoring survival ``G(t) = P(C > t)``.

    Censorings play the role of events. Subjects with an event at ``t``
    remain in the censoring risk set at ``t``.
    """
    return kaplan_meier(data.observed_time, ~data.event_indicator)


@dataclass(frozen=True)
class IpcwWeightTable:
    """Per-subject, per-grid-time IPCW weights and still-alive indicators.

    Attributes
    ----------
    weights : ndarray, shape (n, s)
        ``Delta_i(t_r) / G(T_i(t_r))``; zero for subjects censored at or
        before ``t_r``.
    indicator_z : ndarray, shape (n, s)
        ``I(y_i > t_r)`` as floats.
    grid : ndarray, shape (s,)
        Evaluation times.
    n_zero_g : int
        Number of entries whose censoring survival evaluated to zero; those
        weights were forced to zero.
    """

    weights: np.ndarray
    indicator_z: np.ndarray
    grid: np.ndarray
    n_zero_g: int = 0

    @property
    def shape(self):
        return self.weights.shape

    def columns(self, index) -> "IpcwWeightTable":
        """Table restricted to a subset of grid columns."""
        return IpcwWeightTable(self.weights[:, index], self.indicator_z[:, index],
                               self.grid[index], self.n_zero_g)


def build_weight_table(data: SurvivalDataset, g_hat, grid) -> IpcwWeightTable:
    """Assemble the IPCW weight table on ``grid``.

    For grid time ``t``:

    * ``y_i > t`` (still at risk, any status): weight ``1 / G(t)``, ``Z = 1``;
    * event with ``y_i <= t``: weight ``1 / G(y_i-)``, ``Z = 0``;
    * censored with ``y_i <= t``: weight 0.

    Parameters
    ----------
    data : SurvivalDataset
    g_hat : callable
        Censoring survival function called as ``g_hat(t, side)`` with
        ``side`` in ``{"right", "left"}``; a ``StepSurvivalCurve`` qualifies.
    grid : TimeGrid or array_like
        Evaluation times (any non-negative values are accepted here).
    """
    times = np.asarray(grid.times if isinstance(grid, TimeGrid) else grid, dtype=float).ravel()
    y = data.observed_time[:, None]
    ev = data.event_indicator[:, None]
    at_risk = y > times[None, :]
    died = ev & ~at_risk

    g_grid = np.broadcast_to(np.asarray(g_hat(times, "right"), dtype=float), times.shape)
    g_event = np.asarray(g_hat(data.observed_time, "left"), dtype=float)[:, None]
    denom = np.where(at_risk, g_grid[None, :], np.where(died, g_event, 1.0))
    needed = at_risk | died
    zero = needed & (denom <= 0)
    n_zero = int(zero.sum())
    if n_zero:
        warnings.warn(f"censoring survival is 0 at {n_zero} needed points; "
                      "those weights are set to 0", RuntimeWarning, stacklevel=2)
    with np.errstate(divide="ignore"):
        w = np.where(needed & ~zero, 1.0 / np.where(zero, 1.0, denom), 0.0)
    z = at_risk.astype(float)
    return IpcwWeightTable(w, z, times, n_zero)
