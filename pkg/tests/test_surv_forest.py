import numpy as np
import pytest

from survstack.exceptions import ConfigError, NoOobTreesError
from survstack.surv_core import SurvivalDataset
from survstack.surv_forest import ForestConfig, SurvivalForest, fit_forest, predict_forest

from conftest import simulate_lognormal


def stump(feature, thr, left_jumps, right_jumps):
    """Node and leaf arrays for a depth-one tree."""
    return {
        "feature": [feature, -1, -1], "threshold": [thr, 0.0, 0.0],
        "left": [1, -1, -1], "right": [2, -1, -1],
        "leaf_ptr": [-1, 0, len(left_jumps)], "leaf_len": [0, len(left_jumps), len(right_jumps)],
        "jumps": list(left_jumps) + list(right_jumps),
    }


def leaf(jumps):
    return {"feature": [-1], "threshold": [0.0], "left": [-1], "right": [-1],
            "leaf_ptr": [0], "leaf_len": [len(jumps)], "jumps": list(jumps)}


def assemble(trees, inbag=None):
    keys = ("feature", "threshold", "left", "right", "leaf_ptr", "leaf_len")
    arrays = {k: np.concatenate([np.asarray(t[k]) for t in trees]) for k in keys}
    for k in ("feature", "left", "right", "leaf_ptr", "leaf_len"):
        arrays[k] = arrays[k].astype(np.int64)
    arrays["threshold"] = arrays["threshold"].astype(float)
    arrays["node_offsets"] = np.r_[0, np.cumsum([len(t["feature"]) for t in trees])]
    arrays["jump_offsets"] = np.r_[0, np.cumsum([len(t["jumps"]) for t in trees])]
    arrays["jump_times"] = np.array([j[0] for t in trees for j in t["jumps"]], dtype=float)
    arrays["jump_cumhaz"] = np.array([j[1] for t in trees for j in t["jumps"]], dtype=float)
    arrays["inbag_counts"] = (np.ones((len(trees), 1), np.int32) if inbag is None
                              else np.asarray(inbag, np.int32))
    arrays["event_times"] = np.unique(arrays["jump_times"])
    arrays["train_covariates"] = np.zeros((arrays["inbag_counts"].shape[1], 2))
    return SurvivalForest(ForestConfig(n_trees=len(trees)), **arrays)


def step_value(jumps, t):
    h = 0.0
    for jt, jh in jumps:
        if jt <= t:
            h = jh
    return h


def test_hand_built_three_tree_forest():
    t0_left, t0_right = [(1.0, 0.1), (3.0, 0.4)], [(2.0, 0.5)]
    t1 = [(1.5, 0.2)]
    t2_left, t2_right = [(0.5, 0.3)], [(4.0, 1.0)]
    forest = assemble([stump(0, 0.5, t0_left, t0_right), leaf(t1),
                       stump(1, 0.0, t2_left, t2_right)])
    x = np.array([[0.2, -1.0], [0.9, 2.0], [0.5, 0.0]])
    times = np.array([3.5, 0.0, 1.0, 2.0, 4.0, 1.5])
    for row in x:
        a = t0_left if row[0] <= 0.5 else t0_right
        c = t2_left if row[1] <= 0.0 else t2_right
        want = [np.mean([step_value(a, t), step_value(t1, t), step_value(c, t)]) for t in times]
        got = forest.cumulative_hazard(row, times)[0]
        np.testing.assert_allclose(got, want, atol=1e-12)
        np.testing.assert_allclose(predict_forest(forest, row, times), np.exp(-np.array(want)),
                                   atol=1e-12)


def test_identical_trees_average_to_one_tree():
    tree = stump(0, 0.0, [(1.0, 0.2), (2.0, 0.9)], [(1.5, 0.4)])
    one, many = assemble([tree]), assemble([tree] * 7)
    x = np.random.default_rng(0).normal(size=(10, 2))
    t = np.linspace(0.1, 3, 20)
    np.testing.assert_allclose(many.survival(x, t), one.survival(x, t), atol=1e-15)


def test_oob_mode_uses_out_of_bag_trees_only():
    forest = assemble([leaf([(1.0, 0.2)]), leaf([(1.0, 0.6)]), leaf([(1.0, 1.0)])],
                      inbag=[[1, 0], [0, 0], [0, 1]])
    # subject 0 is out-of-bag in trees 1 and 2, subject 1 in trees 0 and 1
    assert predict_forest(forest, None, 2.0, mode="oob", subject=0) == pytest.approx(np.exp(-0.8))
    assert predict_forest(forest, None, 2.0, mode="oob", subject=1) == pytest.approx(np.exp(-0.4))


def test_no_oob_trees_error_and_fallback():
    forest = assemble([leaf([(1.0, 0.2)]), leaf([(1.0, 0.6)])], inbag=[[1, 0], [2, 1]])
    with pytest.raises(NoOobTreesError, match="no oob trees"):
        predict_forest(forest, None, 2.0, mode="oob", subject=0)
    with pytest.warns(RuntimeWarning, match="no oob trees"):
        s = forest.oob_survival([2.0])
    assert s[0, 0] == pytest.approx(np.exp(-0.4))
    assert s[1, 0] == pytest.approx(np.exp(-0.2))


def test_root_splits_on_separating_binary_covariate():
    rng = np.random.default_rng(2)
    n = 60
    b = np.r_[np.zeros(n // 2), np.ones(n // 2)]
    t = np.where(b == 1, rng.uniform(0.1, 1.0, n), rng.uniform(5.0, 10.0, n))
    x = np.column_stack([rng.standard_normal(n), b, rng.standard_normal(n)])
    d = SurvivalDataset(t, np.ones(n, bool), x)
    forest = fit_forest(d, ForestConfig(n_trees=1, mtry=3, n_split_candidates=0, seed=4))
    tree = forest.tree(0)
    assert tree["feature"][0] == 1
    assert 0.0 <= tree["threshold"][0] < 1.0


def test_invalid_configs():
    with pytest.raises(ConfigError):
        ForestConfig(n_trees=0)
    with pytest.raises(ConfigError):
        ForestConfig(min_node_events=0)
    d = simulate_lognormal(50, [1.0, 0.5])
    with pytest.raises(ConfigError, match="mtry"):
        fit_forest(d, ForestConfig(mtry=3))


def test_bit_identical_refit(small_data):
    cfg = ForestConfig(n_trees=30, seed=9)
    a, b = fit_forest(small_data, cfg), fit_forest(small_data, cfg)
    for name, arr in a.to_arrays().items():
        np.testing.assert_array_equal(arr, b.to_arrays()[name], err_msg=name)
    c = fit_forest(small_data, ForestConfig(n_trees=30, seed=10))
    assert not np.array_equal(a.threshold, c.threshold)


def test_leaves_respect_min_node_events(small_data):
    k = 5
    forest = fit_forest(small_data, ForestConfig(n_trees=20, min_node_events=k, seed=1))
    X, y, e = small_data.covariates, small_data.observed_time, small_data.event_indicator
    for b in range(forest.n_trees):
        tree = forest.tree(b)
        inbag = forest.inbag_counts[b]
        assert inbag.sum() == small_data.n
        leaf_of = np.empty(small_data.n, int)
        for i in range(small_data.n):
            node = 0
            while tree["left"][node] >= 0:
                node = tree["left"][node] if X[i, tree["feature"][node]] <= tree["threshold"][node] \
                    else tree["right"][node]
            leaf_of[i] = node
        for node in np.unique(leaf_of[inbag > 0]):
            members = (leaf_of == node) & (inbag > 0) & e
            assert np.unique(y[members]).size >= k


def test_degenerates_to_marginal_nelson_aalen(small_data):
    forest = fit_forest(small_data, ForestConfig(n_trees=25, min_node_events=small_data.n_events))
    x = np.random.default_rng(1).normal(size=(2, 3)) * 3
    t = np.linspace(0.05, small_data.observed_time.max(), 50)
    s = forest.survival(x, t)
    assert np.max(np.abs(s[0] - s[1])) <= 1e-12


def test_single_tree_leaf_is_nelson_aalen_of_bootstrap(small_data):
    forest = fit_forest(small_data, ForestConfig(n_trees=1, min_node_events=small_data.n_events))
    w = forest.inbag_counts[0]
    y, e = small_data.observed_time, small_data.event_indicator
    ev = np.unique(y[e & (w > 0)])
    na = np.cumsum([w[(y == t) & e].sum() / w[y >= t].sum() for t in ev])
    np.testing.assert_allclose(forest.cumulative_hazard(np.zeros(3), ev)[0], na, rtol=1e-13)


def test_oob_fraction_near_inverse_e():
    d = simulate_lognormal(200, [1.0, -0.5], seed=3)
    forest = fit_forest(d, ForestConfig(n_trees=250, seed=0))
    frac = (forest.inbag_counts == 0).mean()
    assert 0.33 <= frac <= 0.41


def test_predictions_are_survival_curves(small_data, curve_checker):
    forest = fit_forest(small_data, ForestConfig(n_trees=40, seed=2))
    t = np.r_[0.0, np.sort(small_data.observed_time)]
    s = forest.survival(small_data.covariates[:10], t)
    np.testing.assert_array_equal(s[:, 0], 1.0)
    curve_checker(t, s)
    curve_checker(t, forest.oob_survival(t, subjects=np.arange(10)))
