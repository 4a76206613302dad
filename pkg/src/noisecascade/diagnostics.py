"""Analyses of the selection problem itself: loss-distribution overlap,
two-sample Kolmogorov-Smirnov test, clean-detection quality of a selection
mask, and feature-geometry summaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .noise import NoiseRecord
from .rng import Rng


@dataclass
class OverlapReport:
    clean_mean: float
    clean_std: float
    noisy_mean: float
    noisy_std: float
    overlap: float  # sum over shared bins of min(pmf_clean, pmf_noisy)
    ks_d: float
    ks_p: float
    bins: int

    def to_dict(self) -> dict:
        return self.__dict__.copy()


@dataclass
class SelectionQuality:
    precision: float  # selected samples that are truly clean
    recall: float  # clean samples that were selected
    selection_fraction: float

    def to_dict(self) -> dict:
        return self.__dict__.copy()


def loss_overlap(clean_losses, noisy_losses, bins: int = 50) -> OverlapReport:
    """Overlap coefficient of the two loss distributions on a shared
    equal-width histogram over the pooled range. A zero-width pooled range
    means both sets hold one identical value; overlap is 1 by definition."""
    a = np.asarray(clean_losses, dtype=np.float64)
    b = np.asarray(noisy_losses, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("both loss sets must be nonempty")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        overlap = 1.0
    else:
        edges = np.linspace(lo, hi, bins + 1)
        pa = np.histogram(a, bins=edges)[0] / len(a)
        pb = np.histogram(b, bins=edges)[0] / len(b)
        overlap = float(np.minimum(pa, pb).sum())
    d, p = ks_two_sample(a, b) if len(a) >= 2 and len(b) >= 2 else (0.0, 1.0)
    return OverlapReport(
        clean_mean=float(a.mean()), clean_std=float(a.std(ddof=1)) if len(a) > 1 else 0.0,
        noisy_mean=float(b.mean()), noisy_std=float(b.std(ddof=1)) if len(b) > 1 else 0.0,
        overlap=overlap, ks_d=d, ks_p=p, bins=bins,
    )


def ks_two_sample(a, b) -> tuple[float, float]:
    """D = sup |ECDF_a - ECDF_b| over the pooled sample; p from the
    asymptotic Kolmogorov series with effective n = nm/(n+m), 100 terms."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    n, m = len(a), len(b)
    if n < 2 or m < 2:
        raise ValueError("need at least 2 points per sample")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / n
    fb = np.searchsorted(b, pooled, side="right") / m
    d = float(np.abs(fa - fb).max())
    ne = n * m / (n + m)
    lam = math.sqrt(ne) * d
    if lam <= 1e-6:
        return d, 1.0
    s = 0.0
    for k in range(1, 101):
        s += (-1.0) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
    p = min(max(2.0 * s, 0.0), 1.0)
    return d, p


def selection_quality(mask, record: NoiseRecord) -> SelectionQuality:
    mask = np.asarray(mask, dtype=bool)
    clean = record.clean
    if mask.shape != clean.shape:
        raise ValueError("mask and noise record lengths differ")
    n_sel = int(mask.sum())
    if n_sel == 0:
        raise ValueError("empty selection: precision undefined")
    n_clean = int(clean.sum())
    hit = int((mask & clean).sum())
    return SelectionQuality(
        precision=hit / n_sel,
        recall=hit / n_clean if n_clean else 0.0,
        selection_fraction=n_sel / len(mask),
    )


def feature_geometry(features, labels, max_per_class: int = 500,
                     seed: int = 0) -> tuple[float, float]:
    """(intra, inter): mean over classes of the mean pairwise distance within
    each label group, and the mean pairwise distance between group centroids.

    Centroids use every sample; the O(n^2) within-group computation subsamples
    each group to max_per_class points (seeded, deterministic)."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    rng = Rng(seed, "geometry")
    intra_means = []
    centroids = []
    for c in classes:
        idx = np.flatnonzero(y == c)
        if len(idx) < 2:
            raise ValueError(f"class {c} has fewer than 2 samples")
        centroids.append(x[idx].mean(axis=0))
        if len(idx) > max_per_class:
            idx = idx[rng.permutation(len(idx))[:max_per_class]]
        pts = x[idx]
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        iu = np.triu_indices(len(pts), k=1)
        intra_means.append(float(dist[iu].mean()))
    centroids = np.stack(centroids)
    cd = centroids[:, None, :] - centroids[None, :, :]
    cdist = np.sqrt((cd ** 2).sum(axis=2))
    iu = np.triu_indices(len(classes), k=1)
    inter = float(cdist[iu].mean()) if len(classes) > 1 else 0.0
    return float(np.mean(intra_means)), inter
