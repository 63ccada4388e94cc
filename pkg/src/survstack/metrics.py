"""Prediction-error measures for survival curves."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .censor_weights import IpcwWeightTable
from .exceptions import DataError

__all__ = [
    "brier_uncensored",
    "brier_ipcw",
    "brier_ipcw_curve",
    "integrated_brier",
    "isse",
    "IsseReport",
    "summarize_isse",
    "MseDecomposition",
    "mse_decomposition",
]


def brier_uncensored(z, s_hat) -> float:
    """Mean of ``(z_i - s_i)^2`` for fully observed status indicators."""
    z = np.asarray(z, dtype=float)
    s_hat = np.asarray(s_hat, dtype=float)
    if z.shape != s_hat.shape:
        raise DataError("indicator and prediction vectors differ in length")
    return float(np.mean((z - s_hat) ** 2))


def brier_ipcw_curve(wtab: IpcwWeightTable, predictions) -> np.ndarray:
    """IPCW Brier score at every grid column of ``wtab``.

    ``predictions`` has shape ``(n, s)`` matching the weight table.
    """
    pred = np.asarray(predictions, dtype=float)
    if pred.shape != wtab.weights.shape:
        raise DataError(f"predictions have shape {pred.shape}, expected {wtab.weights.shape}")
    n = pred.shape[0]
    return np.sum(wtab.weights * (wtab.indicator_z - pred) ** 2, axis=0) / n


def brier_ipcw(wtab: IpcwWeightTable, predictions, r: int) -> float:
    """IPCW Brier score at grid column ``r``.

    Subjects censored before ``t_r`` carry weight zero and drop out of the
    sum, but the average is still taken over all ``n`` subjects.
    """
    pred = np.asarray(predictions, dtype=float)
    if pred.shape != wtab.weights.shape:
        raise DataError(f"predictions have shape {pred.shape}, expected {wtab.weights.shape}")
    w = wtab.weights[:, r]
    return float(np.sum(w * (wtab.indicator_z[:, r] - pred[:, r]) ** 2) / pred.shape[0])


def integrated_brier(wtab: IpcwWeightTable, predictions) -> float:
    """Trapezoid integral of the IPCW Brier curve over ``(0, tau]``.

    ``tau`` is the last grid time. The Brier score is held at its first
    grid value on ``(0, t_1]``.
    """
    bs = brier_ipcw_curve(wtab, predictions)
    t = np.asarray(wtab.grid, dtype=float)
    lead = bs[0] * t[0]
    if t.size == 1:
        return float(lead)
    return float(lead + np.sum(0.5 * (bs[1:] + bs[:-1]) * np.diff(t)))


def isse(predictions, truth) -> float:
    """Integrated squared survival error.

    ``(1/n) * sum_i sum_j (S_hat(t_j | x_i) - S_o(t_j | x_i))^2`` for
    arrays of shape ``(n, n_times)``.
    """
    pred = np.asarray(predictions, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if pred.shape != tru.shape:
        raise DataError(f"prediction shape {pred.shape} != truth shape {tru.shape}")
    return float(np.sum((pred - tru) ** 2) / pred.shape[0])


@dataclass(frozen=True)
class IsseReport:
    values: np.ndarray
    grid: np.ndarray
    mean: float
    se: float


def summarize_isse(values, grid=None) -> IsseReport:
    """Mean and Monte-Carlo standard error of per-replicate ISSE values."""
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else float("nan")
    g = np.asarray(grid, dtype=float) if grid is not None else np.empty(0)
    return IsseReport(v, g, float(v.mean()), se)


@dataclass(frozen=True)
class MseDecomposition:
    """Empirical pieces of the stacked-estimator MSE decomposition.

    All quantities are averaged over covariate points and summed over grid
    times, i.e. on the ISSE scale.
    """

    candidate_mse: np.ndarray       # (m,)
    bias_products: np.ndarray       # (m, m), off-diagonal used
    cov_products: np.ndarray        # (m, m) Corr * sd * sd, off-diagonal used
    correlation: np.ndarray         # (m, m) mean correlation where defined
    decomposition_total: float
    direct_mse: float

    @property
    def relative_gap(self) -> float:
        if self.direct_mse == 0:
            return 0.0 if self.decomposition_total == 0 else float("inf")
        return abs(self.decomposition_total - self.direct_mse) / self.direct_mse


def mse_decomposition(predictions, alpha, truth) -> MseDecomposition:
    """Estimate the MSE decomposition of a fixed-weight combination.

    Parameters
    ----------
    predictions : array_like, shape (R, m, n, s)
        Survival predictions of ``m`` candidates from ``R`` independent
        replicate fits, evaluated at ``n`` covariate points and ``s`` times.
    alpha : array_like, shape (m,)
        Fixed combination weights.
    truth : array_like, shape (n, s)
        True survival at the same points.

    Notes
    -----
    Moments use ``1/R`` normalisation, under which the decomposition
    total and the directly estimated MSE agree up to rounding.
    """
    P = np.asarray(predictions, dtype=float)
    a = np.asarray(alpha, dtype=float)
    S = np.asarray(truth, dtype=float)
    if P.ndim != 4:
        raise DataError("predictions must have shape (R, m, n, s)")
    R, m, n, s = P.shape
    if R < 2:
        raise DataError("at least two replicates are needed")
    if a.shape != (m,) or S.shape != (n, s):
        raise DataError("alpha/truth shapes do not match predictions")

    err = P - S[None, None]
    mse_k = np.mean(err ** 2, axis=0)                  # (m, n, s)
    bias = err.mean(axis=0)                             # (m, n, s)
    centred = P - P.mean(axis=0)
    cov = np.einsum("rknt,rlnt->klnt", centred, centred) / R
    sd = np.sqrt(np.maximum(np.einsum("kknt->knt", cov), 0.0))
    denom = sd[:, None] * sd[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), np.nan)
    bias_prod = bias[:, None] * bias[None, :]

    agg = lambda v: v.sum(axis=-1).mean(axis=-1)  # noqa: E731  sum over t, mean over x
    cand = agg(mse_k)
    bp = agg(bias_prod)
    cp = agg(cov)
    off = ~np.eye(m, dtype=bool)
    total = float(np.sum(a ** 2 * cand) + np.sum((np.outer(a, a) * (bp + cp))[off]))
    combo = np.einsum("k,rknt->rnt", a, P)
    direct = float(agg(np.mean((combo - S[None]) ** 2, axis=0)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-nan slices
        mean_corr = np.nanmean(corr.reshape(m, m, -1), axis=-1)
    return MseDecomposition(cand, bp, cp, mean_corr, total, direct)
