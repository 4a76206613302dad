import json
import struct

import numpy as np
import pytest

from noisecascade.data import (FeatureDataset, FormatError, SplitSpec,
                               SyntheticSpec, class_weights, generate_synthetic,
                               isic_like_spec, load, load_csv, save,
                               stratified_split)
from noisecascade.methods import LinearProbeClassifier
from noisecascade.stats import evaluate


def small_dataset(n_per_class=5, k=3, d=4, seed=0):
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(n_per_class * k, d)).astype(np.float32)
    labels = np.repeat(np.arange(k), n_per_class)
    return FeatureDataset(feats, labels, k, [f"c{i}" for i in range(k)],
                          {"origin": "test"})


def test_round_trip_is_identity(tmp_path):
    ds = small_dataset()
    path = tmp_path / "x.fvf"
    save(ds, path)
    back = load(path)
    assert np.array_equal(ds.features, back.features)
    assert ds.features.tobytes() == back.features.tobytes()
    assert np.array_equal(ds.labels, back.labels)
    assert ds.class_names == back.class_names
    assert ds.num_classes == back.num_classes
    assert ds.meta == back.meta


def test_round_trip_is_byte_stable(tmp_path):
    ds = small_dataset()
    p1, p2 = tmp_path / "a.fvf", tmp_path / "b.fvf"
    save(ds, p1)
    save(load(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_hand_assembled_buffer_parses(tmp_path):
    # N=3, d=2, K=2 written field by field
    feats = [1.5, -2.0, 0.25, 3.0, -0.5, 4.0]
    labels = [0, 1, 1]
    meta = b"{}"
    buf = b"FVF1" + struct.pack("<I", 1) + struct.pack("<QII", 3, 2, 2)
    for name in (b"neg", b"pos"):
        buf += struct.pack("<I", len(name)) + name
    buf += struct.pack("<I", len(meta)) + meta
    buf += struct.pack("<6f", *feats)
    buf += struct.pack("<3H", *labels)
    path = tmp_path / "hand.fvf"
    path.write_bytes(buf)
    ds = load(path)
    assert ds.n == 3 and ds.dim == 2 and ds.num_classes == 2
    assert np.allclose(ds.features, np.array(feats, dtype=np.float32).reshape(3, 2))
    assert ds.labels.tolist() == labels
    assert ds.class_names == ["neg", "pos"]


def test_label_equal_to_k_rejected(tmp_path):
    ds = small_dataset(k=2)
    path = tmp_path / "x.fvf"
    save(ds, path)
    raw = bytearray(path.read_bytes())
    raw[-2:] = struct.pack("<H", 2)  # last label -> K
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="label out of range"):
        load(path)


@pytest.mark.parametrize("mutate", ["magic", "version", "truncate"])
def test_malformed_files_rejected(tmp_path, mutate):
    ds = small_dataset()
    path = tmp_path / "x.fvf"
    save(ds, path)
    raw = bytearray(path.read_bytes())
    if mutate == "magic":
        raw[:4] = b"NOPE"
    elif mutate == "version":
        raw[4:8] = struct.pack("<I", 9)
    else:
        raw = raw[:-3]
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError):
        load(path)


def test_csv_ingestion(tmp_path):
    path = tmp_path / "feats.csv"
    path.write_text("f0,f1,label\n0.5,1.5,0\n-1.0,2.0,1\n0.0,0.0,1\n")
    ds = load_csv(path)
    assert ds.dim == 2 and ds.num_classes == 2
    assert ds.labels.tolist() == [0, 1, 1]
    sidecar = tmp_path / "feats.csv.names"
    sidecar.write_text("alpha\nbeta\n")
    named = load_csv(path)
    assert named.class_names == ["alpha", "beta"]
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,label\n1,2,0\n")
    with pytest.raises(FormatError):
        load_csv(bad)


def test_split_exact_for_divisible_counts():
    ds = small_dataset(n_per_class=100, k=3)
    train, val, test = stratified_split(ds, SplitSpec(0.7, 0.1, 0.2, seed=0))
    for c in range(3):
        assert (train.labels == c).sum() == 70
        assert (val.labels == c).sum() == 10
        assert (test.labels == c).sum() == 20


def test_split_is_exact_partition():
    ds = small_dataset(n_per_class=17, k=4)
    tagged = FeatureDataset(
        np.arange(ds.n * ds.dim, dtype=np.float32).reshape(ds.n, ds.dim),
        ds.labels, ds.num_classes, ds.class_names)
    train, val, test = stratified_split(tagged, SplitSpec(seed=3))
    ids = [frozenset(map(tuple, part.features.tolist()))
           for part in (train, val, test)]
    assert sum(len(s) for s in ids) == tagged.n
    assert len(ids[0] | ids[1] | ids[2]) == tagged.n


def test_split_heavy_imbalance_keeps_minority_everywhere():
    labels = np.concatenate([np.zeros(12875, dtype=int), np.ones(239, dtype=int)])
    ds = FeatureDataset(np.zeros((len(labels), 1), dtype=np.float32), labels,
                        2, ["major", "minor"])
    train, val, test = stratified_split(ds, SplitSpec(seed=0))
    for part in (train, val, test):
        assert (part.labels == 1).sum() >= 1
    total_minor = sum((p.labels == 1).sum() for p in (train, val, test))
    assert total_minor == 239


def test_split_proportions_within_one_sample():
    ds = small_dataset(n_per_class=23, k=5, seed=2)
    spec = SplitSpec(0.6, 0.15, 0.25, seed=7)
    train, val, test = stratified_split(ds, spec)
    for c in range(5):
        for part, frac in ((train, 0.6), (val, 0.15), (test, 0.25)):
            got = (part.labels == c).sum()
            assert abs(got - frac * 23) < 1.0


def test_split_rejects_too_small_class():
    ds = small_dataset(n_per_class=2, k=2)
    with pytest.raises(ValueError, match="fewer than 3"):
        stratified_split(ds, SplitSpec())


def test_split_deterministic():
    ds = small_dataset(n_per_class=20, k=3, seed=5)
    a = stratified_split(ds, SplitSpec(seed=11))
    b = stratified_split(ds, SplitSpec(seed=11))
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.labels, pb.labels)
        assert np.array_equal(pa.features, pb.features)


def test_class_weights_balanced_is_one():
    w = class_weights(np.repeat(np.arange(4), 25), 4)
    assert np.allclose(w, 1.0)


def test_class_weights_formula():
    labels = np.array([0] * 90 + [1] * 10)
    w = class_weights(labels, 2)
    assert w[0] == pytest.approx(100 / (2 * 90))
    assert w[1] == pytest.approx(5.0)


def test_class_weights_weighted_mean_identity():
    rng = np.random.default_rng(8)
    labels = rng.integers(0, 5, size=500)
    w = class_weights(labels, 5)
    counts = np.bincount(labels, minlength=5)
    assert (counts * w).sum() == pytest.approx(len(labels), abs=1e-9)


def test_class_weights_rejects_empty_class():
    with pytest.raises(ValueError, match="empty class"):
        class_weights(np.array([0, 0, 2]), 3)


def test_synthetic_point_classes_are_perfectly_separable():
    spec = SyntheticSpec(num_classes=4, dim=8, class_counts=[30] * 4,
                         centroid_scale=10.0, sigma=1e-6, seed=1)
    ds = generate_synthetic(spec)
    train, val, test = stratified_split(ds, SplitSpec(seed=0))
    est = LinearProbeClassifier(lr_max=0.01, batch_size=16, max_epochs=20,
                                num_classes=4, seed=0)
    est.fit(train.features, train.labels, val.features, val.labels)
    rep = evaluate(est.predict(test.features), test.labels, 4)
    assert rep.balanced_accuracy == 1.0


def test_confusion_pair_is_closest_centroid_pair():
    spec = SyntheticSpec(num_classes=4, dim=32, class_counts=[200] * 4,
                         centroid_scale=10.0, sigma=0.01,
                         confusion_pairs=[(1, 0)], proximity_factor=0.2, seed=3)
    ds = generate_synthetic(spec)
    means = np.stack([ds.features[ds.labels == c].mean(axis=0) for c in range(4)])
    dist = np.linalg.norm(means[:, None] - means[None, :], axis=2)
    pair_dist = dist[1, 0]
    others = [dist[i, j] for i in range(4) for j in range(i + 1, 4)
              if {i, j} != {0, 1}]
    assert pair_dist == pytest.approx(0.2 * 10.0, rel=0.01)
    assert pair_dist < min(others)


def test_synthetic_deterministic_per_seed():
    spec = isic_like_spec(seed=9)
    a = generate_synthetic(spec)
    b = generate_synthetic(spec)
    assert a.features.tobytes() == b.features.tobytes()
    assert np.array_equal(a.labels, b.labels)


def test_synthetic_class_means_near_centroids():
    # same seed with vanishing sigma exposes the exact centroids
    kwargs = dict(num_classes=3, dim=16, class_counts=[400, 250, 100],
                  centroid_scale=8.0, seed=4)
    centroids = generate_synthetic(SyntheticSpec(sigma=1e-9, **kwargs))
    sigma = 1.5
    ds = generate_synthetic(SyntheticSpec(sigma=sigma, **kwargs))
    for c, n_c in enumerate(kwargs["class_counts"]):
        mu = centroids.features[centroids.labels == c].mean(axis=0)
        m = ds.features[ds.labels == c].mean(axis=0)
        assert np.linalg.norm(m - mu) <= 4 * sigma / np.sqrt(n_c) * np.sqrt(16)


def test_isic_like_preset_matches_published_counts():
    ds = generate_synthetic(isic_like_spec())
    assert ds.n == 14241
    assert ds.dim == 64
    assert ds.class_counts().tolist() == [6705, 3323, 1113, 1099, 867, 628, 253, 253]
    assert ds.class_names[0] == "NV" and ds.class_names[-1] == "VASC"


def test_isic_like_clean_linear_probe_band():
    # the preset is tuned so a clean linear probe lands in the 0.65-0.9 band
    ds = generate_synthetic(isic_like_spec())
    train, val, test = stratified_split(ds, SplitSpec(seed=0))
    est = LinearProbeClassifier(num_classes=8, seed=0)
    est.fit(train.features, train.labels, val.features, val.labels)
    bal = evaluate(est.predict(test.features), test.labels, 8).balanced_accuracy
    assert 0.65 <= bal <= 0.9


def test_dataset_invariants_enforced():
    with pytest.raises(FormatError):
        FeatureDataset(np.zeros((2, 2), dtype=np.float32), np.array([0, 5]), 3, list("abc"))
    with pytest.raises(ValueError):
        FeatureDataset(np.full((1, 2), np.nan, dtype=np.float32), np.array([0]), 1, ["a"])
    with pytest.raises(ValueError):
        FeatureDataset(np.zeros((0, 2), dtype=np.float32), np.zeros(0, dtype=int), 1, ["a"])
