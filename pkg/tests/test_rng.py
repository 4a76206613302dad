import numpy as np

from noisecascade.rng import Rng, child_seed, fnv1a64, mix64

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15


def reference_stream(seed, tag, n):
    """Pure-python rendering of the documented algorithm."""
    key = mix64((seed & MASK) ^ (fnv1a64(tag.encode()) if tag else 0))
    return [mix64((key + i * GAMMA) & MASK) for i in range(1, n + 1)]


def test_raw_matches_documented_algorithm():
    rng = Rng(0x123456789ABCDEF, "init")
    got = [int(v) for v in rng.raw(16)]
    assert got == reference_stream(0x123456789ABCDEF, "init", 16)


def test_stream_continues_across_calls():
    rng = Rng(7)
    a = list(rng.raw(5)) + list(rng.raw(5))
    b = list(Rng(7).raw(10))
    assert a == b


def test_same_seed_same_stream():
    assert np.array_equal(Rng(42).uniform(100), Rng(42).uniform(100))
    assert not np.array_equal(Rng(42).uniform(100), Rng(43).uniform(100))


def test_tags_give_independent_streams():
    a = Rng(42, "init").uniform(50)
    b = Rng(42, "shuffle").uniform(50)
    assert not np.array_equal(a, b)
    assert np.array_equal(Rng(42).derive("init").uniform(50), a)


def test_uniform_range_and_mean():
    u = Rng(0).uniform(20000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


def test_normal_moments():
    z = Rng(1).normal(40001)  # odd length exercises the truncation path
    assert len(z) == 40001
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02


def test_permutation_is_a_permutation():
    p = Rng(3).permutation(257)
    assert sorted(p.tolist()) == list(range(257))
    assert np.array_equal(p, Rng(3).permutation(257))


def test_integers_in_bounds():
    v = Rng(9).integers(7, 5000)
    assert v.min() >= 0 and v.max() < 7
    assert len(np.unique(v)) == 7


def test_child_seed_deterministic_and_tag_sensitive():
    assert child_seed(5, "noise-train") == child_seed(5, "noise-train")
    assert child_seed(5, "noise-train") != child_seed(5, "noise-val")
    assert child_seed(5, "noise-train") != child_seed(6, "noise-train")
