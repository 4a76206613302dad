"""Input validation helpers shared by the estimator API."""

from __future__ import annotations

import numpy as np


def check_feature_array(x, expected_dim: int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D feature array, got shape {x.shape}")
    if expected_dim is not None and x.shape[1] != expected_dim:
        raise ValueError(f"expected {expected_dim} features, got {x.shape[1]}")
    if not np.isfinite(x).all():
        raise ValueError("feature array contains non-finite values")
    return x


def check_label_array(y, n_samples: int, num_classes: int | None = None) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_samples:
        raise ValueError("labels must be 1-D and aligned with the features")
    if not np.issubdtype(y.dtype, np.integer):
        yi = y.astype(np.int64)
        if not np.array_equal(yi, y):
            raise ValueError("labels must be integer class ids")
        y = yi
    y = y.astype(np.int64)
    if len(y) and y.min() < 0:
        raise ValueError("labels must be >= 0")
    if num_classes is not None and len(y) and y.max() >= num_classes:
        raise ValueError(f"label {int(y.max())} out of range for {num_classes} classes")
    return y
