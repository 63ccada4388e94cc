"""Cox proportional hazards model with Efron ties and baseline hazard."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._newton import newton_maximize, standardize
from .exceptions import DataError, SeparationError
from .surv_core import SurvivalDataset

__all__ = ["CoxFit", "fit_cox", "predict_cox", "cox_partial_loglik"]

SEPARATION_NORM = 50.0
INFO_FLOOR = 1e-8


class _RiskSets:
    """Event-time bookkeeping for one sample, independent of beta."""

    def __init__(self, time, event, ties):
        order = np.argsort(-time, kind="stable")  # decreasing time
        self.order = order
        t_sorted = time[order]
        self.event_sorted = event[order]
        # risk set of a time = all rows up to the last row with that time
        neg_uniq, first = np.unique(-t_sorted, return_index=True)
        last = np.r_[first[1:], t_sorted.size] - 1  # inclusive, sorted order
        ev_times = np.unique(time[event])
        self.event_times = ev_times
        self.ev_risk_end = last[np.searchsorted(neg_uniq, -ev_times)]
        # group of tied events per event time
        ev_rows = np.flatnonzero(self.event_sorted)
        self.ev_group = np.searchsorted(ev_times, t_sorted[ev_rows])
        self.ev_rows = ev_rows
        self.d = np.bincount(self.ev_group, minlength=ev_times.size)
        # one (time, l) pair per event: l = 0..d-1
        grp = np.repeat(np.arange(ev_times.size), self.d)
        starts = np.r_[0, np.cumsum(self.d)[:-1]]
        l_index = np.arange(grp.size) - starts[grp]
        self.pair_group = grp
        self.pair_frac = l_index / self.d[grp] if ties == "efron" else np.zeros(grp.size)


def _sums(rs, X_sorted, eta_sorted):
    w = np.exp(eta_sorted)
    s0 = np.cumsum(w)[rs.ev_risk_end]
    s1 = np.cumsum(w[:, None] * X_sorted, axis=0)[rs.ev_risk_end]
    s2 = np.cumsum(w[:, None, None] * X_sorted[:, :, None] * X_sorted[:, None, :],
                   axis=0)[rs.ev_risk_end]
    g = rs.ev_group
    we = w[rs.ev_rows]
    d0 = np.bincount(g, weights=we, minlength=rs.d.size)
    xe = X_sorted[rs.ev_rows]
    d1 = np.zeros_like(s1)
    np.add.at(d1, g, we[:, None] * xe)
    d2 = np.zeros_like(s2)
    np.add.at(d2, g, we[:, None, None] * xe[:, :, None] * xe[:, None, :])
    return w, s0, s1, s2, d0, d1, d2


def _partial(rs, X_sorted, beta):
    eta = X_sorted @ beta
    w, s0, s1, s2, d0, d1, d2 = _sums(rs, X_sorted, eta)
    g, f = rs.pair_group, rs.pair_frac
    den = s0[g] - f * d0[g]
    num1 = s1[g] - f[:, None] * d1[g]
    num2 = s2[g] - f[:, None, None] * d2[g]
    ll = float(eta[rs.ev_rows].sum() - np.log(den).sum())
    mean1 = num1 / den[:, None]
    grad = X_sorted[rs.ev_rows].sum(axis=0) - mean1.sum(axis=0)
    hess = -(num2 / den[:, None, None]).sum(axis=0) + mean1.T @ mean1
    return ll, grad, hess


def cox_partial_loglik(beta, X, time, event, ties="efron"):
    """Log partial likelihood with its gradient and Hessian.

    Parameters
    ----------
    beta : ndarray, shape (p,)
    X : ndarray, shape (n, p)
    time, event : ndarray, shape (n,)
    ties : {"efron", "breslow"}
    """
    X = np.asarray(X, dtype=float)
    time = np.asarray(time, dtype=float)
    event = np.asarray(event, dtype=bool)
    rs = _RiskSets(time, event, ties)
    return _partial(rs, X[rs.order], np.asarray(beta, dtype=float))


def _baseline_increments(rs, eta_sorted):
    """Cumulative-hazard jump at each event time for a subject with eta = 0."""
    w = np.exp(eta_sorted)
    s0 = np.cumsum(w)[rs.ev_risk_end]
    d0 = np.bincount(rs.ev_group, weights=w[rs.ev_rows], minlength=rs.d.size)
    g, f = rs.pair_group, rs.pair_frac
    return np.bincount(g, weights=1.0 / (s0[g] - f * d0[g]), minlength=rs.d.size)


@dataclass(frozen=True)
class CoxFit:
    """Fitted Cox model.

    ``baseline_cumhaz[j]`` is the cumulative hazard at ``baseline_times[j]``
    for a subject whose covariates are all zero.
    """

    coefficients: np.ndarray
    baseline_times: np.ndarray
    baseline_cumhaz: np.ndarray
    ties: str = "efron"
    n_iter: int = 0
    grad_norm: float = 0.0
    loglik: float = float("nan")
    trace: tuple = field(default=(), repr=False)

    def cumhaz0(self, t):
        idx = np.searchsorted(self.baseline_times, np.asarray(t, dtype=float), side="right")
        return np.r_[0.0, self.baseline_cumhaz][idx]

    def survival(self, X, times):
        return predict_cox(self, X, times)

    def to_arrays(self):
        return {"coefficients": self.coefficients, "baseline_times": self.baseline_times,
                "baseline_cumhaz": self.baseline_cumhaz,
                "scalars": np.array([self.n_iter, self.grad_norm, self.loglik])}

    @classmethod
    def from_arrays(cls, ties, arrays):
        s = arrays["scalars"]
        return cls(np.asarray(arrays["coefficients"], dtype=float),
                   np.asarray(arrays["baseline_times"], dtype=float),
                   np.asarray(arrays["baseline_cumhaz"], dtype=float),
                   ties, int(s[0]), float(s[1]), float(s[2]))


def predict_cox(fit: CoxFit, x, t):
    """``S(t | x) = exp(-Lambda0(t) * exp(x'beta))``.

    Held constant after the last event time. Shapes follow
    :func:`survstack.aft_models.predict_aft`.
    """
    x_arr = np.asarray(x, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    eta = np.atleast_2d(x_arr) @ fit.coefficients
    h0 = fit.cumhaz0(np.atleast_1d(t_arr))
    s = np.exp(-h0[None, :] * np.exp(eta)[:, None])
    if t_arr.ndim == 0:
        s = s[:, 0]
    if x_arr.ndim == 1:
        s = s[0]
    return s if np.ndim(s) else float(s)


def fit_cox(data: SurvivalDataset, ties: str = "efron") -> CoxFit:
    """Newton-Raphson maximization of the Cox partial likelihood.

    ``ties="breslow"`` is available as a cross-check; the Efron correction
    is the default for both the likelihood and the baseline hazard.
    Constant columns receive a zero coefficient.
    """
    if ties not in ("efron", "breslow"):
        raise ValueError(f"unknown ties method {ties!r}")
    x = data.covariates
    mean, sd, varying = standardize(x)
    xs = (x[:, varying] - mean[varying]) / sd[varying]
    q = xs.shape[1]
    if data.n_events < q + 2:
        raise DataError(f"{data.n_events} events are too few to fit {q} coefficients")
    if q and np.linalg.matrix_rank(np.column_stack([np.ones(data.n), xs])) < q + 1:
        raise DataError("covariate design is collinear")

    rs = _RiskSets(data.observed_time, data.event_indicator, ties)
    xs_sorted = xs[rs.order]

    def check(beta):
        if np.linalg.norm(beta) > SEPARATION_NORM:
            raise SeparationError(
                "separation: standardized coefficients diverge (monotone likelihood)")

    if q:
        beta_s, ll, grad, n_iter, trace = newton_maximize(
            lambda b: _partial(rs, xs_sorted, b), np.zeros(q), check=check,
            step_tol=1e-4)
    else:
        beta_s, n_iter = np.zeros(0), 0
        ll, grad, _ = _partial(rs, xs_sorted, beta_s)
        trace = [ll]

    if q:
        # the gradient of a monotone likelihood reaches 0 in floating point
        # long before the norm bound; the information then vanishes too
        info = -_partial(rs, xs_sorted, beta_s)[2]
        if np.linalg.eigvalsh(info)[0] <= INFO_FLOOR * data.n:
            raise SeparationError(
                "separation: information matrix is singular at the solution "
                "(monotone likelihood)")

    eta_c = xs_sorted @ beta_s
    dh = _baseline_increments(rs, eta_c)
    coef = np.zeros(data.p)
    coef[varying] = beta_s / sd[varying]
    # centred baseline -> baseline at x = 0
    shift = float(np.sum(coef * mean))
    cumhaz = np.cumsum(dh) * np.exp(-shift)
    return CoxFit(coef, rs.event_times.copy(), cumhaz, ties, n_iter,
                  float(np.max(np.abs(grad), initial=0.0)), ll, tuple(trace))
