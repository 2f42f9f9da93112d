"""Metric oracles: brute-force pair counting, confusion-matrix forms,
naive per-example/per-class loops, and algebraic property tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chexchain.autodiff import Graph, const, param
from chexchain.errors import ConfigurationError, UndefinedMetricError
from chexchain.metrics import (
    MetricsReport,
    auc,
    bce_weights,
    compute_report,
    dice,
    nll,
    pcss,
    pess,
    weighted_bce,
)
from chexchain.rng import substream


# ----- independent references ------------------------------------------------


def pair_count_auc(scores, labels):
    """P(score_pos > score_neg) + 0.5 P(tie), by explicit enumeration."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = ties = 0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1
            elif p == n:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


def confusion_dice(a_bits, b_bits):
    vals = []
    for ar, br in zip(a_bits, b_bits):
        tp = int(np.sum(ar & br))
        fp = int(np.sum(ar & ~br))
        fn = int(np.sum(~ar & br))
        vals.append(1.0 if 2 * tp + fp + fn == 0 else 2 * tp / (2 * tp + fp + fn))
    return float(np.mean(vals))


def naive_pess(bits, y):
    vals = []
    for i in range(bits.shape[0]):
        tp = fn = tn = fp = 0
        for t in range(bits.shape[1]):
            if y[i, t] and bits[i, t]:
                tp += 1
            elif y[i, t] and not bits[i, t]:
                fn += 1
            elif not y[i, t] and not bits[i, t]:
                tn += 1
            else:
                fp += 1
        sens = 1.0 if tp + fn == 0 else tp / (tp + fn)
        spec = 1.0 if tn + fp == 0 else tn / (tn + fp)
        vals.append((sens + spec) / 2)
    return float(np.mean(vals))


def naive_pcss(bits, y):
    vals = []
    for t in range(bits.shape[1]):
        tp = fn = tn = fp = 0
        for i in range(bits.shape[0]):
            if y[i, t] and bits[i, t]:
                tp += 1
            elif y[i, t] and not bits[i, t]:
                fn += 1
            elif not y[i, t] and not bits[i, t]:
                tn += 1
            else:
                fp += 1
        sens = 1.0 if tp + fn == 0 else tp / (tp + fn)
        spec = 1.0 if tn + fp == 0 else tn / (tn + fp)
        vals.append((sens + spec) / 2)
    return float(np.mean(vals))


# ----- AUC --------------------------------------------------------------------


class TestAuc:
    def test_matches_pair_counting(self):
        rng = substream(0, "test-metrics")
        for trial in range(50):
            n = int(rng.integers(4, 40))
            scores = rng.choice([0.1, 0.25, 0.5, 0.7, 0.9], size=n)  # force ties
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                continue
            assert abs(auc(scores, labels) - pair_count_auc(scores, labels)) <= 1e-12

    def test_perfect_separation(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_all_tied_is_half(self):
        assert auc([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]) == 0.5

    def test_single_class_undefined(self):
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.9], [1, 1])
        with pytest.raises(UndefinedMetricError):
            auc([0.1, 0.9], [0, 0])

    @given(
        scores=arrays(np.float64, 12, elements=st.floats(0, 1, allow_nan=False)),
        labels=arrays(np.int64, 12, elements=st.integers(0, 1)),
    )
    @settings(max_examples=60, deadline=None)
    def test_complement_symmetry(self, scores, labels):
        # AUC(s, y) + AUC(s, 1-y) == 1
        if labels.sum() in (0, labels.size):
            return
        assert abs(auc(scores, labels) + auc(scores, 1 - labels) - 1.0) <= 1e-12

    @given(
        scores=arrays(
            np.float64, 10,
            elements=st.floats(-5, 5, allow_nan=False).map(lambda v: round(v, 1)),
        ),
        labels=arrays(np.int64, 10, elements=st.integers(0, 1)),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_transform_invariance(self, scores, labels):
        # strictly increasing transforms preserve order, hence AUC exactly
        if labels.sum() in (0, labels.size):
            return
        transformed = np.exp(scores / 2.0) + 3.0
        assert abs(auc(scores, labels) - auc(transformed, labels)) <= 1e-12

    @given(
        scores=arrays(np.float64, 14, elements=st.floats(0, 1, allow_nan=False)),
        labels=arrays(np.int64, 14, elements=st.integers(0, 1)),
    )
    @settings(max_examples=60, deadline=None)
    def test_always_matches_pair_counting(self, scores, labels):
        if labels.sum() in (0, labels.size):
            return
        assert abs(auc(scores, labels) - pair_count_auc(scores, labels)) <= 1e-12


# ----- DICE --------------------------------------------------------------------


class TestDice:
    def test_binary_matches_confusion_form(self):
        rng = substream(1, "test-metrics")
        a = rng.integers(0, 2, size=(30, 7)).astype(bool)
        b = rng.integers(0, 2, size=(30, 7)).astype(bool)
        got = dice(a.astype(float), b.astype(float))
        assert abs(got - confusion_dice(a, b)) <= 1e-12

    def test_identical_is_one(self):
        y = np.array([[1.0, 0.0, 1.0]])
        assert dice(y, y) == 1.0

    def test_disjoint_is_zero(self):
        assert dice(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]])) == 0.0

    def test_empty_pair_scores_one(self):
        z = np.zeros((1, 4))
        assert dice(z, z) == 1.0

    def test_probabilities_allowed(self):
        # quadratic form: 2<a,b>/(|a|^2+|b|^2)
        a = np.array([[0.5, 0.5]])
        b = np.array([[1.0, 0.0]])
        expected = 2 * 0.5 / (0.5 + 1.0)
        assert abs(dice(a, b) - expected) <= 1e-12

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            dice(np.zeros((2, 3)), np.zeros((2, 4)))

    @given(
        a=arrays(np.int64, (6, 5), elements=st.integers(0, 1)),
        b=arrays(np.int64, (6, 5), elements=st.integers(0, 1)),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetry_and_range(self, a, b):
        d1 = dice(a.astype(float), b.astype(float))
        d2 = dice(b.astype(float), a.astype(float))
        assert abs(d1 - d2) <= 1e-12
        assert 0.0 <= d1 <= 1.0


# ----- PESS / PCSS ---------------------------------------------------------------


class TestPessPcss:
    def test_match_naive_loops(self):
        rng = substream(2, "test-metrics")
        for _ in range(25):
            m = rng.random((12, 6))
            y = rng.integers(0, 2, size=(12, 6))
            bits = m > 0.5
            assert abs(pess(m, y) - naive_pess(bits, y)) <= 1e-12
            assert abs(pcss(m, y) - naive_pcss(bits, y)) <= 1e-12

    def test_perfect_prediction_scores_one(self):
        y = np.array([[1, 0, 1], [0, 0, 1]])
        m = np.where(y == 1, 0.9, 0.1)
        assert pess(m, y) == 1.0
        assert pcss(m, y) == 1.0

    def test_all_zero_labels_and_predictions(self):
        # sensitivity is 0/0 -> 1 by convention, specificity perfect
        y = np.zeros((3, 4))
        m = np.full((3, 4), 0.1)
        assert pess(m, y) == 1.0
        assert pcss(m, y) == 1.0

    def test_threshold_is_strict(self):
        # exactly-threshold probabilities predict negative
        y = np.array([[1, 0]])
        m = np.array([[0.5, 0.5]])
        assert pess(m, y, threshold=0.5) == 0.5  # sens 0, spec 1

    def test_pess_pcss_differ_on_skewed_grid(self):
        # one example all wrong, others perfect: per-example vs per-class
        # averaging weigh it differently
        y = np.array([[1, 1], [0, 0], [0, 0]])
        m = np.array([[0.1, 0.1], [0.2, 0.1], [0.1, 0.2]])
        assert pess(m, y) != pcss(m, y)


# ----- NLL and the training loss --------------------------------------------------


class TestNll:
    def test_hand_value(self):
        # -log(0.8) - log(1-0.25), one example
        probs = np.array([[0.8, 0.25]])
        y = np.array([[1.0, 0.0]])
        assert abs(nll(probs, y) - (-np.log(0.8) - np.log(0.75))) <= 1e-15

    def test_uniform_is_t_ln2(self):
        probs = np.full((7, 14), 0.5)
        y = (substream(3, "test-metrics").random((7, 14)) > 0.5).astype(float)
        assert abs(nll(probs, y) - 14 * np.log(2.0)) <= 1e-12

    def test_mean_over_examples(self):
        p = np.array([[0.9], [0.5]])
        y = np.array([[1.0], [1.0]])
        expected = (-np.log(0.9) - np.log(0.5)) / 2
        assert abs(nll(p, y) - expected) <= 1e-15

    def test_clamps_extremes(self):
        val = nll(np.array([[0.0]]), np.array([[1.0]]))
        assert np.isfinite(val) and val > 20  # -log(1e-12) ~ 27.6


class TestWeightedBce:
    def test_weights_formula(self):
        y = np.array([[1, 0, 0], [1, 0, 0]])  # 2 pos, 4 neg
        bp, bn = bce_weights(y)
        assert bp == 6 / 2 and bn == 6 / 4

    def test_degenerate_batch_falls_back(self):
        assert bce_weights(np.ones((2, 3))) == (1.0, 1.0)
        assert bce_weights(np.zeros((2, 3))) == (1.0, 1.0)

    def test_hand_oracle(self):
        # N=1, T=2, y=[1,0], m=[0.8, 0.4]: bP=2, bN=2
        # loss = -(2*log 0.8 + 2*log 0.6)
        m = const(np.array([[0.8, 0.4]]))
        y = np.array([[1.0, 0.0]])
        loss = weighted_bce(m, y)
        expected = -(2 * np.log(0.8) + 2 * np.log(0.6))
        assert abs(float(loss.data) - expected) <= 1e-12

    def test_balanced_batch_reduces_to_plain_bce(self):
        rng = substream(4, "test-metrics")
        m = const(rng.uniform(0.1, 0.9, size=(4, 2)))
        y = np.array([[1, 0], [0, 1], [1, 0], [0, 1]], dtype=float)  # bP=bN=2
        loss = float(weighted_bce(m, y).data)
        plain = -(y * np.log(m.data) + (1 - y) * np.log(1 - m.data)).sum() / 4
        assert abs(loss - 2.0 * plain) <= 1e-12

    def test_gradient_direction(self):
        # gradient of loss w.r.t. m is negative where y=1 (raise m), positive
        # where y=0 (lower m)
        m = param(np.array([[0.6, 0.6]]))
        y = np.array([[1.0, 0.0]])
        with Graph() as g:
            g.backward(weighted_bce(m, y))
        assert m.grad[0, 0] < 0 < m.grad[0, 1]

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            weighted_bce(const(np.zeros((2, 3))), np.zeros((3, 2)))


# ----- report assembly ----------------------------------------------------------


class TestReport:
    def _report(self, with_auc):
        rng = substream(5, "test-metrics")
        m = rng.random((20, 4))
        y = rng.integers(0, 2, size=(20, 4)).astype(float)
        return compute_report(m, y, with_auc=with_auc, label_names=list("abcd"))

    def test_kv_roundtrip(self):
        rep = self._report(with_auc=True)
        back = MetricsReport.from_kv_text(rep.to_kv_text())
        assert back == rep

    def test_kv_roundtrip_without_auc(self):
        rep = self._report(with_auc=False)
        assert rep.auc_mean is None
        back = MetricsReport.from_kv_text(rep.to_kv_text())
        assert back.auc_mean is None and back.nll == rep.nll

    def test_csv_has_auc_columns_only_when_present(self):
        with_cols = self._report(with_auc=True).to_csv().splitlines()[0]
        without_cols = self._report(with_auc=False).to_csv().splitlines()[0]
        assert "auc_mean" in with_cols and "auc_a" in with_cols
        assert "auc" not in without_cols

    def test_single_class_column_absent_from_mean(self):
        rng = substream(6, "test-metrics")
        m = rng.random((10, 2))
        y = np.column_stack([np.ones(10), rng.integers(0, 2, size=10)])
        rep = compute_report(m, y, with_auc=True)
        assert rep.auc_per_class[0] is None
        assert rep.auc_mean == rep.auc_per_class[1]

    def test_separate_nll_probs(self):
        rng = substream(7, "test-metrics")
        decision = rng.random((8, 3))
        chain = rng.random((8, 3))
        y = rng.integers(0, 2, size=(8, 3)).astype(float)
        rep = compute_report(decision, y, with_auc=False, nll_probs=chain)
        assert rep.nll == nll(chain, y)
        assert rep.dice == dice(decision, y)
