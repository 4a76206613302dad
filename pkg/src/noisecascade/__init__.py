"""Noise-robust classifier-head training on frozen feature vectors."""

from .data import (FeatureDataset, SplitSpec, SyntheticSpec, class_weights,
                   generate_synthetic, load, load_csv, save, stratified_split)
from .diagnostics import (OverlapReport, SelectionQuality, feature_geometry,
                          ks_two_sample, loss_overlap, selection_quality)
from .methods import (CascadeClassifier, CoTeachingClassifier,
                      DivideMixLiteClassifier, ElrClassifier,
                      LinearProbeClassifier, MlpCrossEntropyClassifier,
                      gmm_fit_1d, select_by_agreement, select_by_loss)
from .nncore import TrainConfig, cosine_lr
from .noise import NoiseRecord, NoiseSpec, builtin_map, inject, resolve_map
from .stats import cohens_d_paired, evaluate, paired_t_test

__version__ = "0.1.0"

__all__ = [
    "FeatureDataset", "SplitSpec", "SyntheticSpec", "class_weights",
    "generate_synthetic", "load", "load_csv", "save", "stratified_split",
    "OverlapReport", "SelectionQuality", "feature_geometry", "ks_two_sample",
    "loss_overlap", "selection_quality",
    "CascadeClassifier", "CoTeachingClassifier", "DivideMixLiteClassifier",
    "ElrClassifier", "LinearProbeClassifier", "MlpCrossEntropyClassifier",
    "gmm_fit_1d", "select_by_agreement", "select_by_loss",
    "TrainConfig", "cosine_lr",
    "NoiseRecord", "NoiseSpec", "builtin_map", "inject", "resolve_map",
    "cohens_d_paired", "evaluate", "paired_t_test",
    "__version__",
]
