"""Seeded symmetric and asymmetric label-noise injection with exact flip
counts and full per-sample bookkeeping.

Symmetric noise flips exactly round(rate * N) uniformly chosen samples, each
to a uniformly chosen *different* class, so the nominal rate is the effective
rate. Asymmetric noise flips exactly round(rate * N_c) samples of every
mapped class c to its designated target. Rounding is round-half-to-even.
Features are never touched.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import FeatureDataset
from .rng import Rng

SYMMETRIC = "symmetric"
ASYMMETRIC = "asymmetric"


@dataclass
class NoiseSpec:
    kind: str  # "symmetric" | "asymmetric"
    rate: float
    confusion_map: dict[int, int] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in (SYMMETRIC, ASYMMETRIC):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0 <= self.rate < 1:
            raise ValueError("rate must be in [0, 1)")
        for src, dst in self.confusion_map.items():
            if src == dst:
                raise ValueError("confusion map must not contain self-loops")
        if self.kind == ASYMMETRIC and self.rate > 0 and not self.confusion_map:
            raise ValueError("asymmetric noise requires a nonempty confusion map")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate,
                "confusion_map": {str(k): v for k, v in self.confusion_map.items()},
                "seed": self.seed}


@dataclass
class NoiseRecord:
    original: np.ndarray
    observed: np.ndarray

    @property
    def flipped(self) -> np.ndarray:
        return self.original != self.observed

    @property
    def clean(self) -> np.ndarray:
        return self.original == self.observed

    def to_dict(self) -> dict:
        return {"original": self.original.tolist(),
                "observed": self.observed.tolist(),
                "flipped": self.flipped.tolist()}


def _round_half_even(x: float) -> int:
    return int(np.rint(x))


def inject(ds: FeatureDataset, spec: NoiseSpec) -> tuple[FeatureDataset, NoiseRecord]:
    """Corrupted copy of the dataset (same feature buffer) plus ground truth."""
    k = ds.num_classes
    for src, dst in spec.confusion_map.items():
        if not (0 <= src < k and 0 <= dst < k):
            raise ValueError("confusion map refers to unknown class ids")
    rng = Rng(spec.seed, "noise")
    original = ds.labels.copy()
    observed = ds.labels.copy()
    if spec.kind == SYMMETRIC:
        n_flip = _round_half_even(spec.rate * ds.n)
        if n_flip > 0:
            chosen = rng.permutation(ds.n)[:n_flip]
            # draw in [0, K-1) and skip over each sample's own class
            draw = rng.integers(k - 1, n_flip)
            targets = np.where(draw >= original[chosen], draw + 1, draw)
            observed[chosen] = targets
    else:
        for src in sorted(spec.confusion_map):
            dst = spec.confusion_map[src]
            idx = np.flatnonzero(original == src)
            n_flip = _round_half_even(spec.rate * len(idx))
            if n_flip > len(idx):
                raise ValueError(f"cannot flip {n_flip} of {len(idx)} samples")
            if n_flip > 0:
                chosen = idx[rng.permutation(len(idx))[:n_flip]]
                observed[chosen] = dst
    corrupted = ds.with_labels(observed, {"noise": spec.to_dict()})
    return corrupted, NoiseRecord(original, observed)


# The literature-named look-alike pairs for the two 8-class benchmarks;
# entries map source class name to the class it gets mistaken for.
_BUILTIN_MAPS = {
    "isic8": {"MEL": "NV", "BCC": "BKL", "SCC": "AK", "DF": "BKL"},
    "bloodmnist8": {"BAS": "NEU", "NEU": "EOS", "EOS": "BAS",
                    "LYM": "MON", "MON": "LYM"},
}


def builtin_map(name: str) -> dict[str, str]:
    if name not in _BUILTIN_MAPS:
        raise ValueError(f"unknown builtin map {name!r}; have {sorted(_BUILTIN_MAPS)}")
    return dict(_BUILTIN_MAPS[name])


def resolve_map(names_map: dict[str, str], class_names: list[str]) -> dict[int, int]:
    """Translate a name->name confusion map to class ids for one dataset."""
    index = {n: i for i, n in enumerate(class_names)}
    resolved = {}
    for src, dst in names_map.items():
        if src not in index or dst not in index:
            missing = [n for n in (src, dst) if n not in index]
            raise ValueError(f"confusion map names not in dataset: {missing}")
        resolved[index[src]] = index[dst]
    return resolved
