"""Feature datasets: in-memory representation, the FVF1 binary file format,
CSV ingestion, stratified splits, class weights, and a synthetic generator
for desk-scale experiments.

FVF1 layout (little-endian)::

    magic "FVF1" (4 bytes)
    u32 version = 1
    u64 N, u32 d, u32 K
    K x (u32 byte length + UTF-8 class name)
    u32 byte length + UTF-8 JSON metadata
    N x d float32 features, row-major
    N x u16 labels

Features are stored in 32-bit precision; training promotes to 64-bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import Rng

MAGIC = b"FVF1"
VERSION = 1


class FormatError(ValueError):
    """Malformed feature file: bad magic, version, lengths, or labels."""


@dataclass
class FeatureDataset:
    features: np.ndarray  # (N, d) float32
    labels: np.ndarray  # (N,) int64, each < num_classes
    num_classes: int
    class_names: list[str]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D")
        if len(self.features) != len(self.labels):
            raise ValueError("features/labels length mismatch")
        if len(self.features) < 1:
            raise ValueError("dataset must contain at least one sample")
        if not np.isfinite(self.features).all():
            raise ValueError("non-finite feature values")
        if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
            raise FormatError("label out of range [0, K)")
        if len(self.class_names) != self.num_classes:
            raise ValueError("need one class name per class")

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx: np.ndarray) -> "FeatureDataset":
        return FeatureDataset(self.features[idx], self.labels[idx],
                              self.num_classes, list(self.class_names), dict(self.meta))

    def with_labels(self, labels: np.ndarray, extra_meta: dict | None = None) -> "FeatureDataset":
        meta = dict(self.meta)
        if extra_meta:
            meta.update(extra_meta)
        return FeatureDataset(self.features, labels, self.num_classes,
                              list(self.class_names), meta)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def save(ds: FeatureDataset, path) -> None:
    if ds.num_classes > 0xFFFF:
        raise FormatError("more than 65535 classes cannot be stored")
    chunks = [MAGIC, struct.pack("<I", VERSION),
              struct.pack("<QII", ds.n, ds.dim, ds.num_classes)]
    for name in ds.class_names:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
    meta_raw = json.dumps(ds.meta, sort_keys=True).encode("utf-8")
    chunks.append(struct.pack("<I", len(meta_raw)))
    chunks.append(meta_raw)
    chunks.append(np.ascontiguousarray(ds.features, dtype="<f4").tobytes())
    chunks.append(ds.labels.astype("<u2").tobytes())
    Path(path).write_bytes(b"".join(chunks))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError("truncated payload")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load(path) -> FeatureDataset:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise FormatError("bad magic")
    (version,) = r.unpack("<I")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    n, d, k = r.unpack("<QII")
    names = []
    for _ in range(k):
        (ln,) = r.unpack("<I")
        names.append(r.take(ln).decode("utf-8"))
    (meta_len,) = r.unpack("<I")
    meta = json.loads(r.take(meta_len).decode("utf-8")) if meta_len else {}
    feats = np.frombuffer(r.take(n * d * 4), dtype="<f4").reshape(n, d).copy()
    labels = np.frombuffer(r.take(n * 2), dtype="<u2").astype(np.int64)
    if r.pos != len(r.buf):
        raise FormatError("trailing bytes after payload")
    if len(labels) and labels.max() >= k:
        raise FormatError("label out of range [0, K)")
    return FeatureDataset(feats, labels, int(k), names, meta)


def load_csv(path, class_names: list[str] | None = None) -> FeatureDataset:
    """CSV with header row f0..f{d-1},label. Class names come from the
    optional ``<path>.names`` sidecar (one name per line) unless given."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    d = len(header) - 1
    expected = [f"f{i}" for i in range(d)] + ["label"]
    if header != expected:
        raise FormatError(f"expected header {','.join(expected[:3])},...,label")
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    feats = raw[:, :d].astype(np.float32)
    labels = raw[:, d].astype(np.int64)
    if class_names is None:
        sidecar = path.with_name(path.name + ".names")
        if sidecar.exists():
            class_names = [ln.strip() for ln in sidecar.read_text().splitlines() if ln.strip()]
        else:
            class_names = [f"class{i}" for i in range(int(labels.max()) + 1)]
    return FeatureDataset(feats, labels, len(class_names), class_names,
                          {"source": str(path)})


@dataclass
class SplitSpec:
    train_frac: float = 0.7
    val_frac: float = 0.1
    test_frac: float = 0.2
    stratified: bool = True
    seed: int = 0

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ValueError("all split fractions must be > 0")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


def _allocate(n: int, fracs: tuple[float, ...]) -> list[int]:
    """Largest-remainder apportionment of n items across fractions."""
    exact = [f * n for f in fracs]
    counts = [int(np.floor(e)) for e in exact]
    rem = n - sum(counts)
    order = sorted(range(len(fracs)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:rem]:
        counts[i] += 1
    return counts


def stratified_split(ds: FeatureDataset, spec: SplitSpec):
    """Seeded (train, val, test) partition; per-class proportions within one
    sample of the requested fractions."""
    rng = Rng(spec.seed, "split")
    fracs = (spec.train_frac, spec.val_frac, spec.test_frac)
    parts: list[list[np.ndarray]] = [[], [], []]
    if spec.stratified:
        for c in range(ds.num_classes):
            idx = np.flatnonzero(ds.labels == c)
            if len(idx) < 3:
                raise ValueError(f"class {c} has fewer than 3 samples")
            idx = idx[rng.permutation(len(idx))]
            counts = _allocate(len(idx), fracs)
            if min(counts) == 0:
                raise ValueError(f"class {c} too small to appear in all splits")
            a, b = counts[0], counts[0] + counts[1]
            parts[0].append(idx[:a])
            parts[1].append(idx[a:b])
            parts[2].append(idx[b:])
    else:
        idx = rng.permutation(ds.n)
        counts = _allocate(ds.n, fracs)
        a, b = counts[0], counts[0] + counts[1]
        parts[0].append(idx[:a])
        parts[1].append(idx[a:b])
        parts[2].append(idx[b:])
    splits = tuple(np.sort(np.concatenate(p)) for p in parts)
    return tuple(ds.subset(s) for s in splits)


def class_weights(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """w_c = N / (K * N_c); satisfies sum_c N_c * w_c = N."""
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=num_classes)
    if (counts == 0).any():
        empty = np.flatnonzero(counts == 0)
        raise ValueError(f"empty class(es): {empty.tolist()}")
    return len(labels) / (num_classes * counts.astype(np.float64))


@dataclass
class SyntheticSpec:
    num_classes: int
    dim: int
    class_counts: list[int]
    centroid_scale: float = 10.0
    sigma: float = 1.0
    confusion_pairs: list[tuple[int, int]] = field(default_factory=list)
    proximity_factor: float = 1.0
    class_names: list[str] | None = None
    seed: int = 0

    def __post_init__(self):
        if len(self.class_counts) != self.num_classes:
            raise ValueError("need one count per class")
        if any(c < 1 for c in self.class_counts):
            raise ValueError("all class counts must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")
        if not 0 < self.proximity_factor <= 1:
            raise ValueError("proximity_factor must be in (0, 1]")
        for a, b in self.confusion_pairs:
            if not (0 <= a < self.num_classes and 0 <= b < self.num_classes) or a == b:
                raise ValueError("confusion pairs must be distinct valid class ids")

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes, "dim": self.dim,
            "class_counts": list(self.class_counts),
            "centroid_scale": self.centroid_scale, "sigma": self.sigma,
            "confusion_pairs": [list(p) for p in self.confusion_pairs],
            "proximity_factor": self.proximity_factor,
            "class_names": self.class_names, "seed": self.seed,
        }


def generate_synthetic(spec: SyntheticSpec) -> FeatureDataset:
    """Isotropic Gaussian class clusters standing in for frozen backbone
    features.

    Centroids are drawn from N(0, scale^2/(2*dim) * I), which puts the
    expected distance between any two centroids at ~centroid_scale. For each
    confusion pair (a, b), centroid a is then relocated onto the segment
    towards b at distance proximity_factor * centroid_scale from b, so paired
    classes overlap the way semantically similar classes do. Samples are
    centroid + sigma * standard normal, emitted class by class.
    """
    rng = Rng(spec.seed, "synth")
    k, d = spec.num_classes, spec.dim
    centroids = rng.normal(k * d).reshape(k, d) * (spec.centroid_scale / np.sqrt(2.0 * d))
    for a, b in spec.confusion_pairs:
        direction = centroids[a] - centroids[b]
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            direction = np.ones(d)
            norm = np.sqrt(d)
        centroids[a] = centroids[b] + direction / norm * (
            spec.proximity_factor * spec.centroid_scale)
    feats = []
    labels = []
    for c, count in enumerate(spec.class_counts):
        noise = rng.normal(count * d).reshape(count, d)
        feats.append(centroids[c] + spec.sigma * noise)
        labels.append(np.full(count, c, dtype=np.int64))
    names = spec.class_names or [f"class{i}" for i in range(k)]
    return FeatureDataset(
        np.concatenate(feats).astype(np.float32),
        np.concatenate(labels),
        k, list(names),
        {"source": "synthetic", "spec": spec.to_dict()},
    )


# Desk-scale presets. The imbalanced one mirrors an 8-class dermoscopy
# benchmark's training counts (54:1 ratio) with its four look-alike pairs;
# the balanced one mirrors an 8-class blood-cell benchmark with confusable
# granulocytes and mononuclear cells.
ISIC_LIKE_NAMES = ["NV", "BCC", "MEL", "BKL", "AK", "SCC", "DF", "VASC"]
ISIC_LIKE_COUNTS = [6705, 3323, 1113, 1099, 867, 628, 253, 253]
BLOOD_LIKE_NAMES = ["BAS", "NEU", "EOS", "LYM", "MON", "ERY", "IG", "PLT"]


def isic_like_spec(seed: int = 0, sigma: float = 1.5, proximity_factor: float = 0.3,
                   crowd_minorities: bool = True) -> SyntheticSpec:
    names = ISIC_LIKE_NAMES
    # the four look-alike pairs; crowd_minorities additionally places VASC in
    # the SCC/AK island so the smallest classes sit in contested regions
    # rather than on free blobs, as they do in real dermoscopy features
    pair_names = [("MEL", "NV"), ("BCC", "BKL"), ("DF", "BKL"), ("SCC", "AK")]
    if crowd_minorities:
        pair_names.append(("VASC", "AK"))
    pairs = [(names.index(a), names.index(b)) for a, b in pair_names]
    return SyntheticSpec(
        num_classes=8, dim=64, class_counts=list(ISIC_LIKE_COUNTS),
        centroid_scale=10.0, sigma=sigma, confusion_pairs=pairs,
        proximity_factor=proximity_factor, class_names=list(names), seed=seed,
    )


def blood_like_spec(count_per_class: int = 400, dim: int = 256, seed: int = 0,
                    sigma: float = 1.2, proximity_factor: float = 0.3) -> SyntheticSpec:
    names = BLOOD_LIKE_NAMES
    pair_names = [("NEU", "EOS"), ("BAS", "NEU"), ("MON", "LYM")]
    pairs = [(names.index(a), names.index(b)) for a, b in pair_names]
    return SyntheticSpec(
        num_classes=8, dim=dim, class_counts=[count_per_class] * 8,
        centroid_scale=10.0, sigma=sigma, confusion_pairs=pairs,
        proximity_factor=proximity_factor, class_names=list(names), seed=seed,
    )
