import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survstack.censor_weights import IpcwWeightTable, build_weight_table, km_censoring
from survstack.exceptions import DataError
from survstack.metrics import (brier_ipcw, brier_ipcw_curve, brier_uncensored,
                               integrated_brier, isse, mse_decomposition, summarize_isse)
from survstack.surv_core import SurvivalDataset, TimeGrid


def unit_table(z, times):
    z = np.asarray(z, dtype=float)
    return IpcwWeightTable(np.ones_like(z), z, TimeGrid(times), 0)


class TestBrier:
    def test_perfect_and_half(self):
        z = np.array([1.0, 0.0, 1.0, 1.0])
        assert brier_uncensored(z, z) == 0.0
        assert brier_uncensored(z, np.full(4, 0.5)) == 0.25

    def test_hand_value(self):
        assert brier_uncensored([1, 0, 1], [0.8, 0.3, 0.6]) == pytest.approx(0.29 / 3, abs=1e-15)

    def test_unit_weights_equal_uncensored(self):
        rng = np.random.default_rng(0)
        z = (rng.uniform(size=(30, 4)) < 0.5).astype(float)
        p = rng.uniform(size=(30, 4))
        wt = unit_table(z, [1.0, 2.0, 3.0, 4.0])
        for r in range(4):
            assert brier_ipcw(wt, p, r) == brier_uncensored(z[:, r], p[:, r])
        assert brier_ipcw(wt, z, 0) == 0.0

    def test_four_subject_hand_example(self):
        d = SurvivalDataset([1.0, 2.0, 3.0, 4.0], [1, 0, 1, 0], np.zeros((4, 1)))
        wt = build_weight_table(d, km_censoring(d), TimeGrid([2.5]))
        pred = np.array([[0.9], [0.5], [0.7], [0.4]])
        # weights (1, 0, 1.5, 1.5), Z (0, 0, 1, 1)
        want = (1.0 * 0.81 + 1.5 * 0.09 + 1.5 * 0.36) / 4
        assert brier_ipcw(wt, pred, 0) == pytest.approx(want, abs=1e-15)

    def test_shape_mismatch(self):
        wt = unit_table(np.ones((3, 2)), [1.0, 2.0])
        with pytest.raises(DataError):
            brier_ipcw_curve(wt, np.ones((3, 3)))


class TestIntegratedBrier:
    def test_constant_curve(self):
        times = np.array([0.5, 1.0, 2.0, 4.0])
        z = np.zeros((10, 4))
        wt = unit_table(z, times)
        b = 0.3
        pred = np.full((10, 4), np.sqrt(b))
        assert integrated_brier(wt, pred) == pytest.approx(b * 4.0, rel=1e-14)

    def test_zero_error(self):
        z = np.array([[1.0, 0.0], [1.0, 1.0]])
        assert integrated_brier(unit_table(z, [1.0, 3.0]), z) == 0.0

    def test_two_point_trapezoid(self):
        z = np.array([[1.0, 0.0]])
        pred = np.array([[0.6, 0.3]])
        # BS(1) = 0.16, BS(3) = 0.09; 0.16 * 1 on (0, 1] plus (0.16 + 0.09) / 2 * 2
        assert integrated_brier(unit_table(z, [1.0, 3.0]), pred) == pytest.approx(0.41)


class TestIsse:
    def test_zero_and_offset(self):
        rng = np.random.default_rng(1)
        truth = rng.uniform(0.0, 0.9, size=(25, 19))
        assert isse(truth, truth) == 0.0
        assert isse(truth + 0.1, truth) == pytest.approx(0.19, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 1000))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(size=(2, 12, 19))
        pi, pj = rng.permutation(12), rng.permutation(19)
        assert isse(a[pi][:, pj], b[pi][:, pj]) == pytest.approx(isse(a, b), rel=1e-12)
        assert isse(a, b) >= 0

    def test_summary(self):
        rep = summarize_isse([1.0, 2.0, 3.0, 4.0], np.arange(19.0))
        assert rep.mean == 2.5
        assert rep.se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)


class TestMseDecomposition:
    def test_single_candidate_exact(self):
        rng = np.random.default_rng(2)
        P = rng.uniform(size=(50, 1, 6, 4))
        truth = rng.uniform(size=(6, 4))
        dec = mse_decomposition(P, [1.0], truth)
        assert dec.decomposition_total == pytest.approx(dec.direct_mse, rel=1e-12)

    def test_identical_candidates_collapse(self):
        rng = np.random.default_rng(3)
        one = rng.uniform(size=(40, 1, 5, 3))
        P = np.concatenate([one, one], axis=1)
        truth = rng.uniform(size=(5, 3))
        dec = mse_decomposition(P, [0.5, 0.5], truth)
        single = mse_decomposition(one, [1.0], truth)
        np.testing.assert_allclose(dec.correlation[0, 1], 1.0, atol=1e-12)
        assert dec.decomposition_total == pytest.approx(single.direct_mse, rel=1e-12)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 1000), st.floats(0.0, 1.0))
    def test_identity_holds_for_any_weights(self, seed, a1):
        rng = np.random.default_rng(seed)
        base = rng.uniform(size=(1, 1, 4, 3))
        P = np.clip(base + 0.1 * rng.standard_normal((30, 3, 4, 3)), 0, 1)
        alpha = np.array([a1, (1 - a1) / 2, (1 - a1) / 2])
        dec = mse_decomposition(P, alpha, rng.uniform(size=(4, 3)))
        assert dec.relative_gap <= 1e-10

    def test_needs_two_replicates(self):
        with pytest.raises(DataError):
            mse_decomposition(np.zeros((1, 2, 3, 4)), [0.5, 0.5], np.zeros((3, 4)))
