"""Stacked survival models.

Candidate survival models are combined with time-independent weights on
the probability simplex. The weights minimise the IPCW Brier score of
out-of-fold predictions summed over a grid of event-time quantiles.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .aft_models import fit_aft
from .censor_weights import IpcwWeightTable, build_weight_table, km_censoring
from .cox_model import fit_cox
from .exceptions import CandidateFitError, ConfigError, DataError
from .metrics import integrated_brier
from .surv_core import SurvivalDataset, TimeGrid, event_time_grid
from .surv_forest import ForestConfig, fit_forest

__all__ = [
    "CandidateSpec",
    "StackConfig",
    "OofPredictionTensor",
    "StackWeights",
    "StackedModel",
    "CvSelection",
    "register_candidate",
    "fit_candidate",
    "default_candidates",
    "make_folds",
    "oof_predictions",
    "solve_stack_weights",
    "fit_stack",
    "predict_stack",
    "select_by_cv",
    "ibs_grid",
]


@dataclass(frozen=True)
class CandidateSpec:
    """One candidate model: a unique identifier, a model kind and its
    hyperparameters."""

    identifier: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class StackConfig:
    grid_size: int = 9
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.grid_size < 1:
            raise ConfigError("grid_size must be positive")
        if self.folds < 2:
            raise ConfigError("at least two folds are needed")


# kind -> (fitter(data, params, seed), uses out-of-bag predictions)
_REGISTRY = {}


def register_candidate(kind, fitter, oob=False):
    """Register a candidate model kind.

    ``fitter(data, params, seed)`` must return an object with a
    ``survival(X, times)`` method. Kinds registered with ``oob=True`` are
    fitted once on all data and must also provide ``oob_survival(times)``.
    """
    _REGISTRY[kind] = (fitter, oob)


register_candidate("lognormal", lambda d, p, s: fit_aft(d, "lognormal"))
register_candidate("weibull", lambda d, p, s: fit_aft(d, "weibull"))
register_candidate("cox", lambda d, p, s: fit_cox(d, ties=p.get("ties", "efron")))
register_candidate("rsf", lambda d, p, s: fit_forest(d, ForestConfig(**{"seed": s, **p})),
                   oob=True)


def _lookup(kind):
    try:
        return _REGISTRY[kind]
    except KeyError:
        raise ConfigError(f"unknown candidate kind {kind!r}; "
                          f"known kinds: {sorted(_REGISTRY)}") from None


def fit_candidate(spec: CandidateSpec, data: SurvivalDataset, seed: int = 0):
    """Fit one candidate on ``data``."""
    fitter, _ = _lookup(spec.kind)
    return fitter(data, dict(spec.params), seed)


def default_candidates(min_node_events=3, n_trees=250):
    """Log-normal, Weibull, Cox and random survival forest candidates."""
    return [CandidateSpec("lognormal", "lognormal"),
            CandidateSpec("weibull", "weibull"),
            CandidateSpec("cox", "cox"),
            CandidateSpec("rsf", "rsf", {"n_trees": n_trees,
                                         "min_node_events": min_node_events})]


def _check_specs(specs):
    if not specs:
        raise ConfigError("no candidate models given")
    ids = [s.identifier for s in specs]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"candidate identifiers must be unique: {ids}")
    for s in specs:
        _lookup(s.kind)


def make_folds(data: SurvivalDataset, k: int = 5, seed: int = 0) -> np.ndarray:
    """Random fold labels ``0..k-1`` stratified by event status.

    Events and censored subjects are shuffled separately and dealt
    round-robin, events first, so fold sizes and per-fold event counts each
    differ by at most one.
    """
    if k < 2:
        raise ConfigError("at least two folds are needed")
    if data.n_events < k:
        raise DataError(f"{data.n_events} events cannot populate {k} folds")
    rng = np.random.default_rng(seed)
    ev = np.flatnonzero(data.event_indicator)
    ce = np.flatnonzero(~data.event_indicator)
    order = np.r_[rng.permutation(ev), rng.permutation(ce)]
    folds = np.empty(data.n, dtype=np.int64)
    folds[order] = np.arange(data.n) % k
    return folds


@dataclass(frozen=True)
class OofPredictionTensor:
    """Out-of-fold survival predictions.

    ``values[i, k, r]`` is candidate ``k``'s prediction for subject ``i`` at
    ``times[r]`` from a fit that excluded subject ``i``.
    ``full_fits`` caches all-data fits produced along the way (forest
    candidates), keyed by candidate index.
    """

    values: np.ndarray
    fold_assignment: np.ndarray
    times: np.ndarray
    identifiers: tuple
    full_fits: dict = field(default_factory=dict, repr=False, compare=False)

    def columns_at(self, times) -> np.ndarray:
        """Column indices of ``times`` (which must all be tensor times)."""
        times = np.asarray(times, dtype=float)
        idx = np.searchsorted(self.times, times)
        if np.any(idx >= self.times.size) or not np.array_equal(self.times[np.minimum(
                idx, self.times.size - 1)], times):
            raise DataError("requested times are not columns of the prediction tensor")
        return idx


def oof_predictions(data: SurvivalDataset, specs, grid, folds, seed: int = 0):
    """Build the ``n x m x s`` out-of-fold prediction tensor.

    Regular candidates are refitted once per fold and predict their held-out
    rows; out-of-bag candidates are fitted once on all data and contribute
    their out-of-bag predictions. Entries are clipped to ``[0, 1]``.
    """
    _check_specs(specs)
    times = np.asarray(grid.times if isinstance(grid, TimeGrid) else grid, dtype=float)
    folds = np.asarray(folds)
    if folds.shape != (data.n,):
        raise DataError("fold assignment does not match the dataset")
    labels = np.unique(folds)
    out = np.empty((data.n, len(specs), times.size))
    full_fits = {}
    for k, spec in enumerate(specs):
        _, oob = _lookup(spec.kind)
        if oob:
            try:
                model = fit_candidate(spec, data, seed)
            except Exception as exc:  # noqa: BLE001  reported with context
                raise CandidateFitError(spec.identifier, "all", exc) from exc
            full_fits[k] = model
            out[:, k, :] = model.oob_survival(times)
            continue
        for f in labels:
            held = folds == f
            try:
                model = fit_candidate(spec, data.subset(~held), seed)
            except Exception as exc:  # noqa: BLE001
                raise CandidateFitError(spec.identifier, int(f), exc) from exc
            out[held, k, :] = model.survival(data.covariates[held], times)
    np.clip(out, 0.0, 1.0, out=out)
    return OofPredictionTensor(out, folds.copy(), times.copy(),
                               tuple(s.identifier for s in specs), full_fits)


@dataclass(frozen=True)
class StackWeights:
    """Simplex weights with solver diagnostics.

    ``objective_value`` is ``(1/n) * sum_r sum_i w_ir (Z_ir - P_i.r @ alpha)^2``,
    the IPCW Brier score summed over the grid.
    """

    alpha: np.ndarray
    objective_value: float
    kkt_residual: float
    active_set: tuple
    n_iter: int


def _kkt_solve(Q, c):
    """Minimise ``a'Qa - 2c'a`` subject to ``sum(a) = 1`` (no sign constraint)."""
    m = c.size
    K = np.zeros((m + 1, m + 1))
    K[:m, :m] = 2.0 * Q
    K[:m, m] = K[m, :m] = 1.0
    rhs = np.r_[2.0 * c, 1.0]
    scale = max(1.0, float(np.max(np.abs(np.diag(Q)))))
    jitter = 0.0
    for _ in range(8):
        try:
            sol = np.linalg.solve(K, rhs)
            if np.all(np.isfinite(sol)) and np.linalg.cond(K) < 1e14:
                return sol[:m]
        except np.linalg.LinAlgError:
            pass
        jitter = 1e-10 * scale if jitter == 0.0 else jitter * 100.0
        K[:m, :m] = 2.0 * (Q + jitter * np.eye(m))
    return np.linalg.lstsq(K, rhs, rcond=None)[0][:m]


def _kkt_residual(Q, c, alpha, free):
    grad = 2.0 * (Q @ alpha - c)
    nu = float(np.mean(grad[free]))
    mult = grad - nu
    fixed = ~free
    stat = np.max(np.abs(mult[free]), initial=0.0)
    dual = np.max(np.maximum(-mult[fixed], 0.0), initial=0.0)
    primal = max(abs(alpha.sum() - 1.0), float(np.max(np.maximum(-alpha, 0.0))))
    return max(stat, dual, primal), mult


def _simplex_qp(Q, c, tol=1e-12, max_iter=200):
    """Primal active-set method for ``min a'Qa - 2c'a`` on the simplex."""
    m = c.size
    vertex_obj = np.diag(Q) - 2.0 * c
    alpha = np.zeros(m)
    alpha[int(np.argmin(vertex_obj))] = 1.0
    free = alpha > 0
    scale = max(1.0, float(np.max(np.abs(Q))), float(np.max(np.abs(c))))
    for it in range(max_iter):
        F = np.flatnonzero(free)
        target = np.zeros(m)
        target[F] = _kkt_solve(Q[np.ix_(F, F)], c[F])
        if np.all(target[F] >= -tol):
            alpha = np.maximum(target, 0.0)
            alpha /= alpha.sum()
            _, mult = _kkt_residual(Q, c, alpha, free)
            mult[free] = np.inf
            k = int(np.argmin(mult))
            if mult[k] >= -tol * scale:
                return alpha, free, it
            free[k] = True
        else:
            d = target - alpha
            neg = free & (d < 0)
            steps = alpha[neg] / -d[neg]
            step = min(1.0, float(steps.min()))
            alpha = alpha + step * d
            blocking = np.flatnonzero(neg)[steps <= step + 1e-15]
            alpha[blocking] = 0.0
            alpha = np.maximum(alpha, 0.0)
            alpha /= alpha.sum()
            free = alpha > 0
    warnings.warn("active-set solver hit its iteration limit", RuntimeWarning, stacklevel=2)
    return alpha, free, max_iter


def solve_stack_weights(tensor, wtab: IpcwWeightTable) -> StackWeights:
    """Simplex-constrained weighted least squares for the stacking weights.

    Parameters
    ----------
    tensor : OofPredictionTensor or ndarray, shape (n, m, s)
        Candidate predictions on the weight table's grid.
    wtab : IpcwWeightTable
        Weights and status indicators on the same ``n x s`` layout.

    Notes
    -----
    Candidates whose weighted prediction columns are exactly identical are
    merged before solving and the combined mass is assigned to the first of
    them.
    """
    P = np.asarray(tensor.values if isinstance(tensor, OofPredictionTensor) else tensor,
                   dtype=float)
    if P.ndim != 3:
        raise DataError("prediction tensor must be three-dimensional")
    n, m, s = P.shape
    W = np.asarray(wtab.weights, dtype=float)
    Z = np.asarray(wtab.indicator_z, dtype=float)
    if W.shape != (n, s) or Z.shape != (n, s):
        raise DataError(f"weight table shape {W.shape} does not match tensor ({n}, {m}, {s})")
    if not np.any(W > 0):
        raise DataError("degenerate objective: all IPCW weights are zero")
    P = np.clip(P, 0.0, 1.0)
    sw = np.sqrt(W)
    A = (P * sw[:, None, :]).transpose(0, 2, 1).reshape(n * s, m)
    b = (Z * sw).reshape(n * s)

    keep = []
    owner = np.empty(m, dtype=int)
    for k in range(m):
        for j in keep:
            if np.array_equal(A[:, j], A[:, k]):
                owner[k] = j
                break
        else:
            keep.append(k)
            owner[k] = k
    keep = np.array(keep)
    Ak = A[:, keep]
    Q = Ak.T @ Ak / n
    c = Ak.T @ b / n
    a_red, free_red, n_iter = _simplex_qp(Q, c)
    kkt, _ = _kkt_residual(Q, c, a_red, free_red)

    alpha = np.zeros(m)
    alpha[keep] = a_red
    resid = b - A @ alpha
    obj = float(resid @ resid / n)
    return StackWeights(alpha, obj, float(kkt), tuple(np.flatnonzero(alpha > 0).tolist()),
                        n_iter)


class StackedModel:
    """Time-independent convex combination of fitted candidates."""

    def __init__(self, specs, fits, weights: StackWeights, grid: TimeGrid,
                 covariate_names=()):
        self.specs = list(specs)
        self.fits = list(fits)
        self.weights = weights
        self.grid = grid
        self.covariate_names = tuple(covariate_names)

    @property
    def alpha(self):
        return self.weights.alpha

    @property
    def identifiers(self):
        return [s.identifier for s in self.specs]

    def candidate_survival(self, X, times):
        """Per-candidate predictions, shape ``(m, len(X), len(times))``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        times = np.atleast_1d(np.asarray(times, dtype=float))
        return np.stack([np.clip(f.survival(X, times), 0.0, 1.0) for f in self.fits])

    def survival(self, X, times):
        """Stacked survival, shape ``(len(X), len(times))``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        times = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.zeros((X.shape[0], times.size))
        for a, f in zip(self.alpha, self.fits):
            if a > 0:
                out += a * np.clip(f.survival(X, times), 0.0, 1.0)
        return out

    def __repr__(self):
        w = ", ".join(f"{i}={a:.3f}" for i, a in zip(self.identifiers, self.alpha))
        return f"StackedModel({w})"


def predict_stack(model: StackedModel, x, t):
    """``sum_k alpha_k S_k(t | x)``; shapes as in :func:`predict_aft`."""
    x_arr = np.asarray(x, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    s = model.survival(np.atleast_2d(x_arr), np.atleast_1d(t_arr))
    if t_arr.ndim == 0:
        s = s[:, 0]
    if x_arr.ndim == 1:
        s = s[0]
    return s if np.ndim(s) else float(s)


def ibs_grid(data: SurvivalDataset) -> np.ndarray:
    """Distinct observed times, the integration grid for the IBS on ``(0, tau]``."""
    return np.unique(data.observed_time)


def _oof_for(data, specs, config, times, oof):
    if oof is not None:
        oof.columns_at(times)
        return oof
    folds = make_folds(data, config.folds, config.seed)
    return oof_predictions(data, specs, times, folds, config.seed)


def fit_stack(data: SurvivalDataset, specs, config: StackConfig = StackConfig(), *,
              oof: OofPredictionTensor | None = None, g_hat=None) -> StackedModel:
    """Fit the stacked survival model end to end.

    Builds the event-quantile grid, the censoring Kaplan-Meier and weight
    table, the out-of-fold tensor, solves for the weights and refits each
    candidate on all data. A precomputed ``oof`` tensor whose times include
    the grid may be passed to avoid refitting folds.
    """
    _check_specs(specs)
    grid = event_time_grid(data, config.grid_size)
    g_hat = km_censoring(data) if g_hat is None else g_hat
    wtab = build_weight_table(data, g_hat, grid)
    oof = _oof_for(data, specs, config, grid.times, oof)
    cols = oof.columns_at(grid.times)
    if len(specs) == 1:
        weights = StackWeights(np.ones(1), float("nan"), 0.0, (0,), 0)
    else:
        weights = solve_stack_weights(oof.values[:, :, cols], wtab)
    fits = [oof.full_fits[k] if k in oof.full_fits else fit_candidate(spec, data, config.seed)
            for k, spec in enumerate(specs)]
    return StackedModel(specs, fits, weights, grid, data.covariate_names)


@dataclass(frozen=True)
class CvSelection:
    selected: str
    index: int
    ibs: dict


def select_by_cv(data: SurvivalDataset, specs, config: StackConfig = StackConfig(), *,
                 oof: OofPredictionTensor | None = None, g_hat=None) -> CvSelection:
    """Pick the candidate with the smallest out-of-fold integrated Brier score.

    The IBS integrates the IPCW Brier score over all distinct observed
    times up to the largest one. Ties go to the earlier candidate.
    """
    _check_specs(specs)
    times = ibs_grid(data)
    oof = _oof_for(data, specs, config, times, oof)
    cols = oof.columns_at(times)
    g_hat = km_censoring(data) if g_hat is None else g_hat
    with warnings.catch_warnings():
        # G_hat(tau) = 0 when the largest time is censored; those terms drop out
        warnings.simplefilter("ignore", RuntimeWarning)
        wtab = build_weight_table(data, g_hat, times)
    scores = [integrated_brier(wtab, oof.values[:, k, cols]) for k in range(len(specs))]
    best = int(np.argmin(scores))  # first minimum
    return CvSelection(specs[best].identifier, best,
                       {s.identifier: v for s, v in zip(specs, scores)})
