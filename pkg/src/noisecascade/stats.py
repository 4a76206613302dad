"""Evaluation metrics and significance machinery: confusion matrices,
balanced accuracy, paired t-test and paired Cohen's d.

Balanced accuracy is the mean of per-class recalls; classes absent from the
ground truth are excluded from the mean and flagged. The t CDF is evaluated
through the regularized incomplete beta function (Lentz continued fraction),
so the package needs no external statistics dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class ZeroVarianceError(ValueError):
    pass


class TTestResult(NamedTuple):
    t: float
    p: float
    df: int
    zero_variance: bool = False


@dataclass
class EvalReport:
    confusion: np.ndarray  # K x K counts, rows = true class, cols = predicted
    per_class_recall: np.ndarray  # NaN where the class is absent from truths
    balanced_accuracy: float
    overall_accuracy: float
    recall_range: float
    undefined_classes: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "per_class_recall": [None if math.isnan(r) else r for r in self.per_class_recall],
            "balanced_accuracy": self.balanced_accuracy,
            "overall_accuracy": self.overall_accuracy,
            "recall_range": self.recall_range,
            "undefined_classes": self.undefined_classes,
        }


def evaluate(preds, truths, num_classes: int) -> EvalReport:
    preds = np.asarray(preds, dtype=np.int64)
    truths = np.asarray(truths, dtype=np.int64)
    if preds.shape != truths.shape:
        raise ValueError("preds and truths must have equal length")
    if preds.min(initial=0) < 0 or preds.max(initial=0) >= num_classes:
        raise ValueError("prediction id out of range")
    if truths.min(initial=0) < 0 or truths.max(initial=0) >= num_classes:
        raise ValueError("truth id out of range")
    k = num_classes
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (truths, preds), 1)
    row_sums = confusion.sum(axis=1)
    recalls = np.full(k, np.nan)
    present = row_sums > 0
    recalls[present] = confusion.diagonal()[present] / row_sums[present]
    defined = recalls[present]
    return EvalReport(
        confusion=confusion,
        per_class_recall=recalls,
        balanced_accuracy=float(np.mean(defined)),
        overall_accuracy=float(confusion.trace() / len(truths)),
        recall_range=float(defined.max() - defined.min()),
        undefined_classes=[int(c) for c in np.flatnonzero(~present)],
    )


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def betainc_reg(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: int) -> float:
    """Two-sided p-value for a Student-t statistic: I_{df/(df+t^2)}(df/2, 1/2)."""
    if math.isinf(t):
        return 0.0
    return betainc_reg(df / 2.0, 0.5, df / (df + t * t))


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test.

    Zero-variance differences are reported as an exact edge and flagged:
    t = 0, p = 1 when all differences are zero, otherwise t = +-inf, p = 0.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("need two equal-length samples of size >= 2")
    d = a - b
    n = len(d)
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, 1.0, df, zero_variance=True)
        return TTestResult(math.copysign(math.inf, mean), 0.0, df, zero_variance=True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, t_sf_two_sided(t, df), df)


def cohens_d_paired(a, b) -> float:
    """Paired (difference-score) Cohen's d: mean(diff) / std(diff, ddof=1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    d = a - b
    if len(d) < 2:
        raise ValueError("need at least 2 pairs")
    sd = float(d.std(ddof=1))
    mean = float(d.mean())
    if sd == 0.0:
        if mean == 0.0:
            return 0.0
        raise ZeroVarianceError("zero-variance differences with nonzero mean")
    return mean / sd
