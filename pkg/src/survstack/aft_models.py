"""Weibull and log-normal accelerated failure time models.

Both families write ``log T = x'beta + sigma * W`` with ``W`` standard normal
(log-normal) or standard minimum extreme value (Weibull), and are fitted by
maximum likelihood with a damped Newton iteration on standardized
covariates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ._newton import newton_maximize, standardize
from .exceptions import ConfigError, DataError
from .surv_core import SurvivalDataset

__all__ = ["AftFit", "fit_aft", "predict_aft", "aft_loglik", "FAMILIES"]

FAMILIES = ("weibull", "lognormal")
_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _log_density_terms(family, z, event):
    """Per-subject ``g, g', g''`` where ``g`` is the log density (events)
    or log survival (censored) of the standardized error at ``z``."""
    if family == "weibull":
        ez = np.exp(np.minimum(z, 700.0))
        g = np.where(event, z - ez, -ez)
        g1 = np.where(event, 1.0 - ez, -ez)
        g2 = -ez
    else:
        log_sf = stats.norm.logsf(z)
        mills = np.exp(stats.norm.logpdf(z) - log_sf)
        g = np.where(event, -0.5 * z * z - _HALF_LOG_2PI, log_sf)
        g1 = np.where(event, -z, -mills)
        g2 = np.where(event, -1.0, -mills * (mills - z))
    return g, g1, g2


def aft_loglik(params, X, time, event, family):
    """Right-censored log-likelihood, gradient and Hessian.

    Parameters
    ----------
    params : ndarray, shape (q + 1,)
        Coefficients for the columns of ``X`` followed by ``log(sigma)``.
    X : ndarray, shape (n, q)
        Design matrix (include an intercept column explicitly).
    time, event : ndarray, shape (n,)

    Returns
    -------
    loglik : float
    grad : ndarray, shape (q + 1,)
    hess : ndarray, shape (q + 1, q + 1)

    Notes
    -----
    The log-likelihood is on the time scale, i.e. it includes the
    ``-log y`` Jacobian for events.
    """
    if family not in FAMILIES:
        raise ConfigError(f"unknown AFT family {family!r}")
    # trial points far from the optimum may overflow; they come back non-finite
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return _loglik_terms(params, X, time, event, family)


def _loglik_terms(params, X, time, event, family):
    beta, log_sigma = params[:-1], params[-1]
    sigma = np.exp(log_sigma)
    log_y = np.log(time)
    z = (log_y - X @ beta) / sigma
    g, g1, g2 = _log_density_terms(family, z, event)
    ev = event.astype(float)
    ll = float(np.sum(g) - np.sum(ev * (log_sigma + log_y)))

    d_mu = -g1 / sigma
    d_s = -z * g1 - ev
    d_mumu = g2 / sigma**2
    d_mus = (g2 * z + g1) / sigma
    d_ss = z * g1 + z * z * g2

    grad = np.r_[X.T @ d_mu, d_s.sum()]
    q = X.shape[1]
    hess = np.empty((q + 1, q + 1))
    hess[:q, :q] = (X * d_mumu[:, None]).T @ X
    hess[:q, q] = hess[q, :q] = X.T @ d_mus
    hess[q, q] = d_ss.sum()
    return ll, grad, hess


@dataclass(frozen=True)
class AftFit:
    """A fitted AFT model.

    ``coefficients[0]`` is the intercept on the log-time scale; the
    remaining entries follow the dataset's covariate order.
    """

    family: str
    coefficients: np.ndarray
    log_scale: float
    n_iter: int = 0
    grad_norm: float = 0.0
    loglik: float = float("nan")
    trace: tuple = field(default=(), repr=False)

    @property
    def scale(self) -> float:
        return float(np.exp(self.log_scale))

    def linear_predictor(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.coefficients[0] + X @ self.coefficients[1:]

    def survival(self, X, times):
        """Survival matrix of shape ``(len(X), len(times))``."""
        return predict_aft(self, X, times)

    def to_arrays(self):
        return {"coefficients": self.coefficients,
                "scalars": np.array([self.log_scale, self.n_iter, self.grad_norm, self.loglik])}

    @classmethod
    def from_arrays(cls, family, arrays):
        s = arrays["scalars"]
        return cls(family, np.asarray(arrays["coefficients"], dtype=float), float(s[0]),
                   int(s[1]), float(s[2]), float(s[3]))


def predict_aft(fit: AftFit, x, t):
    """Closed-form survival ``S(t | x)`` of a fitted AFT model.

    ``x`` may be one covariate vector or a matrix of rows; ``t`` a scalar
    or a vector. The result has shape ``(rows, times)``, squeezed to match
    scalar inputs.
    """
    x_arr = np.asarray(x, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    mu = fit.linear_predictor(x_arr)[:, None]
    tt = np.atleast_1d(t_arr)[None, :]
    with np.errstate(divide="ignore"):
        z = (np.log(tt) - mu) / fit.scale
    if fit.family == "weibull":
        s = np.exp(-np.exp(np.minimum(z, 700.0)))
    else:
        s = stats.norm.sf(z)
    if t_arr.ndim == 0:
        s = s[:, 0]
    if x_arr.ndim == 1:
        s = s[0]
    return s if np.ndim(s) else float(s)


def fit_aft(data: SurvivalDataset, family: str) -> AftFit:
    """Maximum-likelihood AFT fit with main effects for every covariate.

    Constant covariate columns get a zero coefficient. Raises
    ``DataError`` for a collinear design or too few events and
    ``ConvergenceError`` if Newton fails.
    """
    if family not in FAMILIES:
        raise ConfigError(f"unknown AFT family {family!r}")
    x = data.covariates
    mean, sd, varying = standardize(x)
    xs = (x[:, varying] - mean[varying]) / sd[varying]
    q = xs.shape[1]
    if data.n_events < q + 2:
        raise DataError(f"{data.n_events} events are too few to fit {q + 2} parameters")
    design = np.column_stack([np.ones(data.n), xs])
    if np.linalg.matrix_rank(design) < q + 1:
        raise DataError("covariate design is collinear")

    time, event = data.observed_time, data.event_indicator
    log_y = np.log(time)
    d_ev = design[event]
    beta0, *_ = np.linalg.lstsq(d_ev, log_y[event], rcond=None)
    resid = log_y[event] - d_ev @ beta0
    sd0 = float(np.std(resid))
    theta0 = np.r_[beta0, np.log(sd0 if sd0 > 1e-8 else 1.0)]

    theta, ll, grad, n_iter, trace = newton_maximize(
        lambda th: aft_loglik(th, design, time, event, family), theta0)

    b_std = theta[1:q + 1]
    coef = np.zeros(data.p)
    coef[varying] = b_std / sd[varying]
    intercept = theta[0] - np.sum(b_std * mean[varying] / sd[varying])
    return AftFit(family, np.r_[intercept, coef], float(theta[-1]), n_iter,
                  float(np.max(np.abs(grad), initial=0.0)), ll, tuple(trace))
