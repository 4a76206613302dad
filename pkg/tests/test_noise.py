import numpy as np
import pytest

from noisecascade.data import FeatureDataset
from noisecascade.noise import (NoiseSpec, builtin_map, inject, resolve_map)


def dataset_with_counts(counts, d=3, seed=0):
    rng = np.random.default_rng(seed)
    labels = np.concatenate([np.full(n, c) for c, n in enumerate(counts)])
    feats = rng.normal(size=(len(labels), d)).astype(np.float32)
    names = [f"c{i}" for i in range(len(counts))]
    return FeatureDataset(feats, labels, len(counts), names)


def test_zero_rate_changes_nothing():
    ds = dataset_with_counts([50, 50])
    out, rec = inject(ds, NoiseSpec("symmetric", 0.0, seed=1))
    assert np.array_equal(out.labels, ds.labels)
    assert rec.flipped.sum() == 0


def test_symmetric_flip_count_exact_and_no_self_flips():
    ds = dataset_with_counts([400, 300, 300])
    out, rec = inject(ds, NoiseSpec("symmetric", 0.4, seed=2))
    assert rec.flipped.sum() == 400
    flipped = rec.flipped
    assert np.all(out.labels[flipped] != ds.labels[flipped])
    assert np.array_equal(out.labels[~flipped], ds.labels[~flipped])


def test_symmetric_features_byte_identical():
    ds = dataset_with_counts([30, 30])
    out, _ = inject(ds, NoiseSpec("symmetric", 0.3, seed=3))
    assert out.features.tobytes() == ds.features.tobytes()


def test_symmetric_flip_targets_cover_other_classes():
    ds = dataset_with_counts([600, 600, 600, 600])
    out, rec = inject(ds, NoiseSpec("symmetric", 0.5, seed=4))
    for c in range(4):
        targets = out.labels[rec.flipped & (ds.labels == c)]
        assert set(np.unique(targets)) == set(range(4)) - {c}


def test_asymmetric_exact_per_class_counts():
    ds = dataset_with_counts([100, 80, 60, 40])
    spec = NoiseSpec("asymmetric", 0.4, {0: 1, 2: 3}, seed=5)
    out, rec = inject(ds, spec)
    assert (rec.flipped & (ds.labels == 0)).sum() == 40
    assert (rec.flipped & (ds.labels == 2)).sum() == 24
    for untouched in (1, 3):
        assert not (rec.flipped & (ds.labels == untouched)).any()
    assert np.all(out.labels[rec.flipped & (ds.labels == 0)] == 1)
    assert np.all(out.labels[rec.flipped & (ds.labels == 2)] == 3)


def test_rounding_is_half_to_even():
    # 0.1 * 5 = 0.5 -> 0 flips; 0.1 * 15 = 1.5 -> 2 flips
    ds5 = dataset_with_counts([5, 5])
    _, rec5 = inject(ds5, NoiseSpec("asymmetric", 0.1, {0: 1}, seed=6))
    assert rec5.flipped.sum() == 0
    ds15 = dataset_with_counts([15, 15])
    _, rec15 = inject(ds15, NoiseSpec("asymmetric", 0.1, {0: 1}, seed=6))
    assert rec15.flipped.sum() == 2


def test_injection_deterministic_per_seed():
    ds = dataset_with_counts([200, 200])
    a = inject(ds, NoiseSpec("symmetric", 0.25, seed=7))[1]
    b = inject(ds, NoiseSpec("symmetric", 0.25, seed=7))[1]
    c = inject(ds, NoiseSpec("symmetric", 0.25, seed=8))[1]
    assert np.array_equal(a.observed, b.observed)
    assert not np.array_equal(a.observed, c.observed)


def test_flip_exactness_over_many_seeds():
    ds = dataset_with_counts([111, 77, 55])
    for seed in range(30):
        _, rec = inject(ds, NoiseSpec("symmetric", 0.3, seed=seed))
        assert rec.flipped.sum() == round(0.3 * ds.n)


def test_noise_record_consistency():
    ds = dataset_with_counts([60, 60])
    _, rec = inject(ds, NoiseSpec("symmetric", 0.5, seed=9))
    assert np.array_equal(rec.flipped, rec.original != rec.observed)
    assert np.array_equal(rec.clean, ~rec.flipped)


def test_builtin_isic_map():
    m = builtin_map("isic8")
    assert m == {"MEL": "NV", "BCC": "BKL", "SCC": "AK", "DF": "BKL"}
    assert all(src != dst for src, dst in m.items())


def test_builtin_blood_map_cycles():
    m = builtin_map("bloodmnist8")
    # granulocytes form a 3-cycle
    assert m["BAS"] == "NEU" and m["NEU"] == "EOS" and m["EOS"] == "BAS"
    # mononuclear pair composes to the identity
    assert m[m["LYM"]] == "LYM"


def test_builtin_unknown_name():
    with pytest.raises(ValueError, match="unknown builtin map"):
        builtin_map("cifar10")


def test_resolve_map_against_class_names():
    resolved = resolve_map({"MEL": "NV"}, ["NV", "MEL", "BKL"])
    assert resolved == {1: 0}
    with pytest.raises(ValueError, match="not in dataset"):
        resolve_map({"MEL": "XX"}, ["NV", "MEL"])


def test_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec("weird", 0.1)
    with pytest.raises(ValueError):
        NoiseSpec("symmetric", 1.0)
    with pytest.raises(ValueError):
        NoiseSpec("asymmetric", 0.2, {1: 1})
    with pytest.raises(ValueError):
        NoiseSpec("asymmetric", 0.2)
    with pytest.raises(ValueError):
        inject(dataset_with_counts([5, 5]), NoiseSpec("asymmetric", 0.2, {0: 7}))
