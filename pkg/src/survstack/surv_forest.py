"""Random survival forest with log-rank splitting.

Trees are grown on bootstrap samples. At each node ``mtry`` covariates are
drawn and, for each, ``n_split_candidates`` random thresholds (or every
threshold when that count is 0). The split maximising the absolute
two-sample log-rank statistic is kept provided both children retain at
least ``min_node_events`` distinct event times (bootstrap copies of one
subject count once). Leaves store the Nelson-Aalen cumulative
hazard of their in-bag sample, and ensembles average cumulative hazards.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .exceptions import ConfigError, NoOobTreesError
from .surv_core import SurvivalDataset

__all__ = ["ForestConfig", "SurvivalForest", "fit_forest", "predict_forest"]


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters.

    ``mtry=None`` resolves to ``ceil(sqrt(p))`` at fit time.
    ``n_split_candidates=0`` searches every threshold.
    """

    n_trees: int = 250
    mtry: int | None = None
    min_node_events: int = 3
    n_split_candidates: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ConfigError("n_trees must be positive")
        if self.min_node_events < 1:
            raise ConfigError("min_node_events must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ConfigError("mtry must be positive")
        if self.n_split_candidates < 0:
            raise ConfigError("n_split_candidates must be >= 0")

    def resolved_mtry(self, p):
        mtry = self.mtry if self.mtry is not None else int(math.ceil(math.sqrt(p)))
        if mtry > p:
            raise ConfigError(f"mtry={mtry} exceeds the number of covariates p={p}")
        return mtry


@numba.njit(cache=True)
def _logrank_scan(samples, s, e, xcol, thr, time, event, min_events):
    """|log-rank| statistic for the split ``x <= thr`` of ``samples[s:e]``.

    ``samples[s:e]`` is sorted by increasing time. Returns -1 when the
    split is not admissible.
    """
    n_left = 0
    ev_left = 0
    ev_right = 0
    last_left = -1.0
    last_right = -1.0
    for k in range(s, e):
        i = samples[k]
        if xcol[i] <= thr:
            n_left += 1
            if event[i] and time[i] != last_left:
                ev_left += 1
                last_left = time[i]
        elif event[i] and time[i] != last_right:
            ev_right += 1
            last_right = time[i]
    if n_left == 0 or n_left == e - s:
        return -1.0
    if ev_left < min_events or ev_right < min_events:
        return -1.0
    num = 0.0
    var = 0.0
    y = 0.0
    yl = 0.0
    k = e - 1
    while k >= s:
        t = time[samples[k]]
        d = 0.0
        dl = 0.0
        while k >= s and time[samples[k]] == t:
            i = samples[k]
            left = xcol[i] <= thr
            y += 1.0
            if left:
                yl += 1.0
            if event[i]:
                d += 1.0
                if left:
                    dl += 1.0
            k -= 1
        if d > 0.0:
            num += dl - yl * d / y
            if y > 1.0:
                frac = yl / y
                var += d * frac * (1.0 - frac) * (y - d) / (y - 1.0)
    if var <= 0.0:
        return -1.0
    return abs(num) / math.sqrt(var)


@numba.njit(cache=True)
def _distinct_event_times(samples, s, e, time, event):
    count = 0
    last = -1.0
    for k in range(s, e):
        i = samples[k]
        if event[i] and time[i] != last:
            count += 1
            last = time[i]
    return count


@numba.njit(cache=True)
def _grow_tree(X, time, event, order, seed, mtry, min_events, n_cand):
    """Grow one tree; ``order`` sorts the full sample by increasing time."""
    np.random.seed(seed)
    n, p = X.shape
    counts = np.zeros(n, np.int64)
    for _ in range(n):
        counts[np.random.randint(0, n)] += 1
    m = 0
    samples = np.empty(n, np.int64)
    for k in range(n):
        i = order[k]
        for _ in range(counts[i]):
            samples[m] = i
            m += 1
    buf = np.empty(n, np.int64)

    max_nodes = 2 * n + 1
    feature = np.full(max_nodes, -1, np.int64)
    threshold = np.zeros(max_nodes)
    left = np.full(max_nodes, -1, np.int64)
    right = np.full(max_nodes, -1, np.int64)
    leaf_ptr = np.full(max_nodes, -1, np.int64)
    leaf_len = np.zeros(max_nodes, np.int64)
    jt = np.empty(n)
    jh = np.empty(n)
    n_jumps = 0

    st_node = np.empty(max_nodes, np.int64)
    st_s = np.empty(max_nodes, np.int64)
    st_e = np.empty(max_nodes, np.int64)
    top = 0
    st_node[0] = 0
    st_s[0] = 0
    st_e[0] = n
    top = 1
    n_nodes = 1
    feats = np.arange(p)

    while top > 0:
        top -= 1
        node = st_node[top]
        s = st_s[top]
        e = st_e[top]
        ev = _distinct_event_times(samples, s, e, time, event)
        best_stat = 0.0
        best_f = -1
        best_thr = 0.0
        if ev >= 2 * min_events:
            for j in range(mtry):
                r = j + np.random.randint(0, p - j)
                tmp = feats[j]
                feats[j] = feats[r]
                feats[r] = tmp
            for j in range(mtry):
                f = feats[j]
                xcol = X[:, f]
                vmax = -np.inf
                for k in range(s, e):
                    v = xcol[samples[k]]
                    if v > vmax:
                        vmax = v
                if n_cand > 0:
                    for _ in range(n_cand):
                        thr = xcol[samples[s + np.random.randint(0, e - s)]]
                        if thr >= vmax:
                            continue
                        stat = _logrank_scan(samples, s, e, xcol, thr, time, event, min_events)
                        if stat > best_stat:
                            best_stat = stat
                            best_f = f
                            best_thr = thr
                else:
                    vals = np.empty(e - s)
                    for k in range(s, e):
                        vals[k - s] = xcol[samples[k]]
                    vals = np.unique(vals)
                    for k in range(vals.size - 1):
                        stat = _logrank_scan(samples, s, e, xcol, vals[k], time, event,
                                             min_events)
                        if stat > best_stat:
                            best_stat = stat
                            best_f = f
                            best_thr = vals[k]
        if best_f >= 0:
            xcol = X[:, best_f]
            nl = 0
            for k in range(s, e):
                if xcol[samples[k]] <= best_thr:
                    buf[s + nl] = samples[k]
                    nl += 1
            nr = 0
            for k in range(s, e):
                if xcol[samples[k]] > best_thr:
                    buf[s + nl + nr] = samples[k]
                    nr += 1
            for k in range(s, e):
                samples[k] = buf[k]
            feature[node] = best_f
            threshold[node] = best_thr
            lc = n_nodes
            rc = n_nodes + 1
            n_nodes += 2
            left[node] = lc
            right[node] = rc
            st_node[top] = rc
            st_s[top] = s + nl
            st_e[top] = e
            top += 1
            st_node[top] = lc
            st_s[top] = s
            st_e[top] = s + nl
            top += 1
        else:
            # Nelson-Aalen over the in-bag leaf sample
            leaf_ptr[node] = n_jumps
            at_risk = float(e - s)
            h = 0.0
            k = s
            while k < e:
                t = time[samples[k]]
                d = 0.0
                c = 0.0
                while k < e and time[samples[k]] == t:
                    d += event[samples[k]]
                    c += 1.0
                    k += 1
                if d > 0.0:
                    h += d / at_risk
                    jt[n_jumps] = t
                    jh[n_jumps] = h
                    n_jumps += 1
                at_risk -= c
            leaf_len[node] = n_jumps - leaf_ptr[node]

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            leaf_ptr[:n_nodes], leaf_len[:n_nodes], jt[:n_jumps].copy(),
            jh[:n_jumps].copy(), counts)


@numba.njit(cache=True)
def _predict_cumhaz(Xq, times, use, node_off, jump_off, feature, threshold, left, right,
                    leaf_ptr, leaf_len, jt, jh):
    """Average per-tree cumulative hazards over trees with ``use[q, b]``.

    ``times`` must be sorted increasingly.
    """
    nq = Xq.shape[0]
    n_trees = node_off.size - 1
    ns = times.size
    out = np.zeros((nq, ns))
    used = np.zeros(nq)
    for q in range(nq):
        for b in range(n_trees):
            if not use[q, b]:
                continue
            used[q] += 1.0
            base = node_off[b]
            node = 0
            while left[base + node] >= 0:
                if Xq[q, feature[base + node]] <= threshold[base + node]:
                    node = left[base + node]
                else:
                    node = right[base + node]
            ptr = jump_off[b] + leaf_ptr[base + node]
            ln = leaf_len[base + node]
            if ln == 0:
                continue
            # times are sorted: walk the leaf's jumps alongside them
            k = -1
            for r in range(ns):
                while k + 1 < ln and jt[ptr + k + 1] <= times[r]:
                    k += 1
                if k >= 0:
                    out[q, r] += jh[ptr + k]
    for q in range(nq):
        if used[q] > 0:
            for r in range(ns):
                out[q, r] /= used[q]
    return out, used


class SurvivalForest:
    """Fitted random survival forest.

    Tree structure is stored flat: node arrays for all trees concatenated
    with ``node_offsets`` marking tree boundaries, and leaf cumulative
    hazards as concatenated step functions indexed by ``jump_offsets``.
    """

    _ARRAYS = ("node_offsets", "jump_offsets", "feature", "threshold", "left", "right",
               "leaf_ptr", "leaf_len", "jump_times", "jump_cumhaz", "inbag_counts",
               "event_times", "train_covariates")

    def __init__(self, config, **arrays):
        self.config = config
        for name in self._ARRAYS:
            setattr(self, name, np.ascontiguousarray(arrays[name]))

    @property
    def n_trees(self):
        return self.node_offsets.size - 1

    def tree(self, b):
        """Node arrays of tree ``b`` as a dict (for inspection and tests)."""
        a, z = self.node_offsets[b], self.node_offsets[b + 1]
        j0, j1 = self.jump_offsets[b], self.jump_offsets[b + 1]
        return {"feature": self.feature[a:z], "threshold": self.threshold[a:z],
                "left": self.left[a:z], "right": self.right[a:z],
                "leaf_ptr": self.leaf_ptr[a:z], "leaf_len": self.leaf_len[a:z],
                "jump_times": self.jump_times[j0:j1], "jump_cumhaz": self.jump_cumhaz[j0:j1]}

    def _cumhaz(self, X, times, use):
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(X, dtype=float)))
        times = np.atleast_1d(np.asarray(times, dtype=float))
        order = np.argsort(times, kind="stable")
        h, used = _predict_cumhaz(X, np.ascontiguousarray(times[order]),
                                  np.ascontiguousarray(use), self.node_offsets,
                                  self.jump_offsets, self.feature, self.threshold, self.left,
                                  self.right, self.leaf_ptr, self.leaf_len, self.jump_times,
                                  self.jump_cumhaz)
        out = np.empty_like(h)
        out[:, order] = h
        return out, used

    def cumulative_hazard(self, X, times):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        use = np.ones((X.shape[0], self.n_trees), dtype=np.bool_)
        return self._cumhaz(X, times, use)[0]

    def survival(self, X, times):
        """Ensemble survival matrix, shape ``(len(X), len(times))``."""
        return np.exp(-self.cumulative_hazard(X, times))

    def oob_survival(self, times, subjects=None, fallback=True):
        """Out-of-bag survival of training subjects.

        Subjects that are in-bag in every tree raise ``NoOobTreesError``
        unless ``fallback`` is true, in which case their ensemble
        prediction is used and a warning is issued.
        """
        idx = np.arange(self.inbag_counts.shape[1]) if subjects is None else np.atleast_1d(subjects)
        use = (self.inbag_counts[:, idx] == 0).T
        h, used = self._cumhaz(self.train_covariates[idx], times, use)
        missing = used == 0
        if missing.any():
            if not fallback:
                raise NoOobTreesError(
                    f"no oob trees for training subject(s) {idx[missing].tolist()}")
            warnings.warn(f"{int(missing.sum())} subject(s) have no oob trees; "
                          "using the full ensemble", RuntimeWarning, stacklevel=2)
            h[missing] = self.cumulative_hazard(self.train_covariates[idx[missing]], times)
        return np.exp(-h)

    def to_arrays(self):
        return {name: getattr(self, name) for name in self._ARRAYS}

    @classmethod
    def from_arrays(cls, config, arrays):
        return cls(config, **{name: arrays[name] for name in cls._ARRAYS})


def _tree_seed(seed, b):
    return int(np.random.SeedSequence([seed, b]).generate_state(1, dtype=np.uint32)[0])


def fit_forest(data: SurvivalDataset, config: ForestConfig = ForestConfig()) -> SurvivalForest:
    """Grow a random survival forest. Output depends only on data and seed.

    With fewer than ``2 * min_node_events`` events no split is admissible
    and every tree is a single Nelson-Aalen leaf.
    """
    mtry = config.resolved_mtry(data.p)
    X = np.ascontiguousarray(data.covariates)
    time = np.ascontiguousarray(data.observed_time)
    event = data.event_indicator.astype(np.int64)
    order = np.argsort(time, kind="stable")
    parts = [_grow_tree(X, time, event, order, _tree_seed(config.seed, b), mtry,
                        config.min_node_events, config.n_split_candidates)
             for b in range(config.n_trees)]
    node_sizes = [pt[0].size for pt in parts]
    jump_sizes = [pt[6].size for pt in parts]
    cat = lambda k: np.concatenate([pt[k] for pt in parts])  # noqa: E731
    return SurvivalForest(
        config,
        node_offsets=np.r_[0, np.cumsum(node_sizes)].astype(np.int64),
        jump_offsets=np.r_[0, np.cumsum(jump_sizes)].astype(np.int64),
        feature=cat(0), threshold=cat(1), left=cat(2), right=cat(3), leaf_ptr=cat(4),
        leaf_len=cat(5), jump_times=cat(6), jump_cumhaz=cat(7),
        inbag_counts=np.stack([pt[8] for pt in parts]).astype(np.int32),
        event_times=np.unique(data.event_times), train_covariates=X.copy())


def predict_forest(forest: SurvivalForest, x, t, mode="ensemble", subject=None):
    """Survival prediction ``exp(-mean_b H_b(t | x))``.

    ``mode="oob"`` averages only the trees for which training row
    ``subject`` was out-of-bag (``x`` is then ignored) and raises
    ``NoOobTreesError`` if there are none.
    """
    t_arr = np.asarray(t, dtype=float)
    if mode == "ensemble":
        x_arr = np.asarray(x, dtype=float)
        s = forest.survival(np.atleast_2d(x_arr), np.atleast_1d(t_arr))
        if x_arr.ndim == 1:
            s = s[0]
    elif mode == "oob":
        if subject is None:
            raise ValueError("oob mode needs the training subject index")
        s = forest.oob_survival(np.atleast_1d(t_arr), subjects=[subject], fallback=False)[0]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if t_arr.ndim == 0:
        s = s[..., 0]
    return s if np.ndim(s) else float(s)
