import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from admeta.data import Dataset
from admeta.metafeatures import (FEATURE_NAMES, N_FEATURES, extract, global_profile, local_profile,
                                 locality, mahalanobis, profile_features, regularize)
from conftest import gaussian


def test_feature_names_order():
    assert N_FEATURES == 19
    assert FEATURE_NAMES[:4] == ("TR_G", "CM_G", "TH_G", "TQ_G")
    assert FEATURE_NAMES[4:8] == ("TR_L20", "CM_L20", "TH_L20", "TQ_L20")
    assert FEATURE_NAMES[-3:] == ("LOC20", "LOC60", "LOC80")


def test_mahalanobis_examples():
    assert mahalanobis([3, 4], [0, 0], np.eye(2)) == pytest.approx(5.0, abs=1e-12)
    assert mahalanobis([2, 0], [0, 0], np.diag([0.25, 1.0])) == pytest.approx(1.0, abs=1e-12)
    assert mahalanobis([1, 1], [1, 1], np.eye(2)) == 0.0
    with pytest.raises(ValueError):
        mahalanobis([1, 2, 3], [0, 0], np.eye(2))


def test_regularize_ridge_value():
    S = np.diag([2.0, 4.0])
    assert np.allclose(regularize(S) - S, 3e-6 * np.eye(2), rtol=0, atol=1e-15)
    assert np.allclose(regularize(np.zeros((2, 2))), 1e-12 * np.eye(2), rtol=0, atol=0)


def test_global_profile_identity_cov_is_euclidean():
    ds = gaussian(40, 4, seed=1)
    prof = global_profile(ds, cov=np.eye(4)).values
    X = ds.X
    loo = np.array([np.delete(X, i, 0).mean(0) for i in range(len(X))])
    assert np.allclose(prof, np.linalg.norm(X - loo, axis=1), rtol=0, atol=1e-9)


def test_global_profile_matches_oracle():
    ds = gaussian(50, 3, seed=2)
    assert np.allclose(global_profile(ds).values, oracles.global_profile(ds.X), rtol=0, atol=1e-9)


def test_local_profile_clamps_s():
    ds = gaussian(15, 2, seed=3)
    a = local_profile(ds, 80).values
    b = local_profile(ds, 14).values
    assert np.array_equal(a, b)
    assert np.allclose(a, oracles.local_profile(ds.X, 80), rtol=0, atol=1e-9)


def test_profile_features_examples():
    assert profile_features(np.full(5, 2.0)) == (0.0, 0.0, 0.0, 0.0)
    tr, cm, th, tq = profile_features(np.array([0.0, 1, 2, 3, 4]))
    assert (tr, cm, th, tq) == (4.0, 0.5, 0.5, 0.25)
    v = np.random.default_rng(0).exponential(size=37)
    assert np.allclose(profile_features(v), oracles.profile_features(list(v)), rtol=0, atol=1e-12)


def test_locality_examples():
    g = np.array([1.0, 2.0, 4.0])
    assert locality(g, g) == pytest.approx(1.0)
    assert locality(2 * g, g) == pytest.approx(2.0)
    assert locality(np.array([5.0, 1.0]), np.array([0.0, 2.0])) == pytest.approx(0.5)
    r = np.random.default_rng(1)
    a, b = r.uniform(0.1, 3, 50), r.uniform(0.1, 3, 50)
    assert locality(a, b) == pytest.approx(oracles.locality(a, b), abs=1e-12)
    with pytest.raises(ValueError):
        locality(a, b[:10])


def test_extract_standard_normal_matches_oracle():
    ds = gaussian(300, 5, seed=4)
    assert np.allclose(extract(ds), oracles.metafeatures(ds.X), rtol=0, atol=1e-6)


def test_extract_with_tied_distances_matches_oracle():
    # integer grid: many equal distances, so the index tie-break matters
    r = np.random.default_rng(5)
    ds = Dataset("ties", r.integers(0, 4, size=(90, 2)).astype(float))
    assert np.allclose(extract(ds), oracles.metafeatures(ds.X), rtol=0, atol=1e-6)


def test_extract_needs_three_rows():
    with pytest.raises(ValueError, match="N >= 3"):
        extract(Dataset("tiny", np.eye(2)))


def test_extract_deterministic_bitwise():
    ds = gaussian(120, 6, seed=6)
    assert extract(ds).tobytes() == extract(ds).tobytes()


def test_extract_ignores_labels():
    ds = gaussian(60, 3, seed=7)
    labeled = Dataset("l", ds.X, np.r_[np.ones(3, int), np.zeros(57, int)])
    assert np.array_equal(extract(ds), extract(labeled))


def _check_invariants(F):
    assert F.shape == (19,)
    assert np.isfinite(F).all()
    for p in range(4):
        cm, th, tq = F[4 * p + 1: 4 * p + 4]
        assert 0 <= cm <= 1 and 0 <= th <= 1 and 0 <= tq <= 1
        assert tq <= th + 1e-15


datasets = st.integers(4, 45).flatmap(lambda n: st.integers(1, 5).flatmap(
    lambda k: arrays(np.float64, (n, k), elements=st.floats(-100, 100, allow_nan=False, width=32))))


@settings(max_examples=40, deadline=None)
@given(datasets)
def test_invariants_hold(X):
    _check_invariants(extract(Dataset("h", X)))


@settings(max_examples=25, deadline=None)
@given(st.integers(10, 70), st.integers(1, 6), st.integers(0, 10**6))
def test_permutation_invariance(n, k, seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, k)) * r.uniform(0.5, 3, size=k)
    a = extract(Dataset("a", X))
    b = extract(Dataset("b", X[r.permutation(n)]))
    assert np.allclose(a, b, rtol=0, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(10, 70), st.integers(1, 6), st.integers(0, 10**6),
       st.floats(-50, 50, allow_nan=False))
def test_translation_invariance(n, k, seed, shift):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, k))
    a = extract(Dataset("a", X))
    b = extract(Dataset("b", X + shift * r.uniform(-1, 1, size=k)))
    assert np.allclose(a, b, rtol=0, atol=1e-6)
