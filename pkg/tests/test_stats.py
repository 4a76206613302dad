import math

import numpy as np
import pytest
from scipy import integrate

from noisecascade.stats import (ZeroVarianceError, betainc_reg, cohens_d_paired,
                                evaluate, paired_t_test, t_sf_two_sided)


def test_perfect_predictions():
    truths = np.array([0, 1, 2, 0, 1, 2])
    rep = evaluate(truths, truths, 3)
    assert rep.balanced_accuracy == 1.0
    assert rep.overall_accuracy == 1.0
    assert rep.recall_range == 0.0
    assert rep.confusion.trace() == 6


def test_hand_confusion_matrix():
    # class 0: 2 of 4 right; class 1: 4 of 4 right
    truths = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    preds = np.array([0, 0, 1, 1, 1, 1, 1, 1])
    rep = evaluate(preds, truths, 2)
    assert rep.per_class_recall.tolist() == [0.5, 1.0]
    assert rep.balanced_accuracy == 0.75
    assert rep.recall_range == 0.5


def test_majority_predictor_dissociates_overall_and_balanced():
    truths = np.array([0] * 90 + [1] * 10)
    preds = np.zeros(100, dtype=int)
    rep = evaluate(preds, truths, 2)
    assert rep.overall_accuracy == pytest.approx(0.9)
    assert rep.balanced_accuracy == pytest.approx(0.5)


def test_evaluate_order_invariant_and_counts_consistent():
    rng = np.random.default_rng(0)
    truths = rng.integers(0, 4, 200)
    preds = rng.integers(0, 4, 200)
    rep = evaluate(preds, truths, 4)
    perm = rng.permutation(200)
    rep2 = evaluate(preds[perm], truths[perm], 4)
    assert np.array_equal(rep.confusion, rep2.confusion)
    assert rep.confusion.sum() == 200
    assert np.array_equal(rep.confusion.sum(axis=1), np.bincount(truths, minlength=4))


def test_absent_class_excluded_and_flagged():
    truths = np.array([0, 0, 1, 1])
    preds = np.array([0, 2, 1, 1])
    rep = evaluate(preds, truths, 3)
    assert rep.undefined_classes == [2]
    assert math.isnan(rep.per_class_recall[2])
    assert rep.balanced_accuracy == pytest.approx((0.5 + 1.0) / 2)


def test_balacc_equals_mean_recall_on_random_cases():
    rng = np.random.default_rng(1)
    for _ in range(100):
        k = int(rng.integers(2, 7))
        n = int(rng.integers(k, 200))
        truths = rng.integers(0, k, n)
        preds = rng.integers(0, k, n)
        rep = evaluate(preds, truths, k)
        # brute-force recalls
        recalls = []
        for c in range(k):
            idx = truths == c
            if idx.sum():
                recalls.append((preds[idx] == c).sum() / idx.sum())
        assert rep.balanced_accuracy == np.mean(recalls)


def test_evaluate_rejects_bad_inputs():
    with pytest.raises(ValueError):
        evaluate([0, 1], [0], 2)
    with pytest.raises(ValueError):
        evaluate([0, 2], [0, 1], 2)


def test_t_test_identical_samples():
    a = np.array([1.0, 2.0, 3.0])
    res = paired_t_test(a, a)
    assert res.t == 0.0 and res.p == 1.0
    assert res.zero_variance


def test_t_test_constant_nonzero_difference_flagged():
    a = np.array([2.0, 3.0, 4.0, 5.0, 6.0])
    res = paired_t_test(a, a - 1.0)
    assert res.zero_variance
    assert res.p == 0.0
    assert math.isinf(res.t) and res.t > 0


def test_t_test_hand_case():
    b = np.zeros(5)
    a = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
    res = paired_t_test(a, b)
    expected_t = 3.0 / (math.sqrt(2.5) / math.sqrt(5))
    assert res.t == pytest.approx(expected_t, rel=1e-12)
    assert res.df == 4


def test_t_test_antisymmetric():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=8), rng.normal(size=8)
    r1, r2 = paired_t_test(a, b), paired_t_test(b, a)
    assert r1.t == pytest.approx(-r2.t)
    assert r1.p == pytest.approx(r2.p)


def t_density(x, df):
    c = math.gamma((df + 1) / 2) / (math.sqrt(df * math.pi) * math.gamma(df / 2))
    return c * (1 + x * x / df) ** (-(df + 1) / 2)


def test_p_value_matches_numeric_integration():
    # independent oracle: quadrature of the t density
    for df in range(2, 11):
        for t in (0.3, 1.0, 2.5, 4.0, 7.5):
            tail, _ = integrate.quad(t_density, t, np.inf, args=(df,))
            assert t_sf_two_sided(t, df) == pytest.approx(2 * tail, abs=1e-6)


def test_betainc_reference_values():
    assert betainc_reg(1.0, 1.0, 0.3) == pytest.approx(0.3, rel=1e-12)
    assert betainc_reg(2.0, 2.0, 0.5) == pytest.approx(0.5, rel=1e-12)
    assert betainc_reg(0.5, 0.5, 0.25) == pytest.approx(2 / math.pi * math.asin(0.5), rel=1e-10)


def test_cohens_d_cases():
    a = np.array([1.0, 2.0, 3.0])
    assert cohens_d_paired(a, a) == 0.0
    assert cohens_d_paired(a + np.array([1.0, 2.0, 3.0]), a) == pytest.approx(2.0)
    jitter = np.array([2.0, 2.0001, 1.9999, 2.0, 2.0])
    d = cohens_d_paired(jitter + np.zeros(5), np.zeros(5))
    assert d > 100
    with pytest.raises(ZeroVarianceError):
        cohens_d_paired(a + 2.0, a)


def test_cohens_d_sign_follows_mean_difference():
    rng = np.random.default_rng(3)
    a = rng.normal(size=10)
    b = a - 0.5 + rng.normal(size=10) * 0.01
    assert cohens_d_paired(a, b) > 0
    assert cohens_d_paired(b, a) < 0
