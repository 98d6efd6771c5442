import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

import oracles
from admeta.data import Dataset
from admeta.detectors import (DETECTOR_IDS, DetectorError, DetectorSpec, abod_scores, average_path_length,
                              copod_scores, default_specs, hbos_scores, iforest_scores, knn_scores,
                              lof_scores, pca_scores, run_detector)
from conftest import gaussian, with_outlier


def rel_close(a, b, rtol=1e-6):
    return np.allclose(a, b, rtol=rtol, atol=1e-12)


# ---------------------------------------------------------------- kNN

def test_knn_hand_geometry():
    X = np.array([-0.1, 0.0, 0.1, 10.0])
    mean = knn_scores(X, 2, "mean")
    assert mean[3] == pytest.approx(9.95, abs=1e-12)
    assert mean.argmax() == 3
    assert knn_scores(X, 2, "largest")[3] == pytest.approx(10.0, abs=1e-12)


def test_knn_clamps_k(caplog):
    X = np.random.default_rng(0).normal(size=(60, 2))
    with caplog.at_level(logging.WARNING):
        s = knn_scores(X, 60, "mean")
    assert "clamping" in caplog.text
    assert rel_close(s, oracles.knn(X, 59, "mean"))


def test_knn_errors():
    with pytest.raises(DetectorError):
        knn_scores(np.zeros((1, 2)), 1)
    with pytest.raises(DetectorError):
        knn_scores(np.eye(3), 1, "median")


# ---------------------------------------------------------------- LOF

def _grid(n=20):
    g = np.arange(n, dtype=float)
    return np.array([(a, b) for a in g for b in g])


def test_lof_grid_interior_near_one():
    X = _grid()
    s = lof_scores(X, 8)
    interior = [i for i, (a, b) in enumerate(X) if 3 <= a <= 16 and 3 <= b <= 16]
    assert np.all((s[interior] >= 0.9) & (s[interior] <= 1.1))


def test_lof_far_point_is_max():
    X = np.vstack([_grid(), [[19 + 10, 19 + 10]]])
    s = lof_scores(X, 8)
    assert s.argmax() == len(X) - 1
    assert s[-1] > 1.5


def test_lof_duplicates_all_one():
    assert np.array_equal(lof_scores(np.ones((12, 3)), 5), np.ones(12))


def test_lof_matches_oracle():
    X = np.random.default_rng(1).normal(size=(80, 3))
    assert rel_close(lof_scores(X, 10), oracles.lof(X, 10))


# ---------------------------------------------------------------- HBOS

def test_hbos_single_bin_all_equal():
    s = hbos_scores(np.full((30, 1), 4.2), 10)
    assert np.all(s == s[0])


def test_hbos_lone_top_bin():
    X = np.r_[np.zeros(99), 100.0][:, None]
    s = hbos_scores(X, 90)
    assert s.argmax() == 99 and s[99] > s[0]


def test_hbos_matches_oracle():
    X = np.random.default_rng(2).normal(size=(500, 3))
    assert np.allclose(hbos_scores(X, 90), oracles.hbos(X, 90), rtol=0, atol=1e-9)


def test_hbos_rejects_one_bin():
    with pytest.raises(DetectorError):
        hbos_scores(np.eye(3), 1)


# ---------------------------------------------------------------- COPOD

def test_copod_extremes_on_a_line():
    X = np.arange(1.0, 101.0)[:, None]
    top2 = set(np.argsort(-copod_scores(X))[:2])
    assert top2 == {0, 99}


def test_copod_sign_flip_symmetric_data():
    h = np.random.default_rng(3).normal(size=(50, 2))
    X = np.vstack([h, -h])
    assert np.allclose(copod_scores(X), copod_scores(-X), rtol=0, atol=1e-9)


def test_copod_matches_oracle():
    X = np.random.default_rng(4).normal(size=(200, 2))
    X[:, 1] = np.exp(X[:, 1])  # skewed column exercises the tail choice
    assert np.allclose(copod_scores(X), oracles.copod(X), rtol=0, atol=1e-9)


def test_copod_ties_match_oracle():
    X = np.random.default_rng(5).integers(0, 5, size=(60, 3)).astype(float)
    assert np.allclose(copod_scores(X), oracles.copod(X), rtol=0, atol=1e-9)


# ---------------------------------------------------------------- PCA

def test_pca_off_line_point_highest():
    t = np.linspace(-3, 3, 50)
    X = np.c_[t, 2 * t]
    X = np.vstack([X, [[0.0, 1.0]]])
    assert pca_scores(X).argmax() == 50


def test_pca_whitened_isotropic_matches_distance_rank():
    r = np.random.default_rng(6)
    Z = r.normal(size=(200, 4))
    Z -= Z.mean(0)
    L = np.linalg.cholesky(np.cov(Z, rowvar=False))
    X = Z @ np.linalg.inv(L).T  # sample covariance exactly I up to rounding
    s = pca_scores(X)
    d2 = ((X - X.mean(0)) ** 2).sum(1)
    assert np.allclose(s, d2, rtol=1e-9)
    assert spearmanr(s, d2).statistic == pytest.approx(1.0)


def test_pca_identical_points_zero():
    assert np.array_equal(pca_scores(np.ones((10, 3))), np.zeros(10))


def test_pca_matches_oracle():
    r = np.random.default_rng(7)
    X = r.normal(size=(150, 6)) @ r.normal(size=(6, 6))
    assert rel_close(pca_scores(X), oracles.pca(X))


# ---------------------------------------------------------------- ABOD

def test_abod_hexagon_center_least_anomalous():
    ang = np.arange(6) * np.pi / 3
    X = np.vstack([[0.0, 0.0], np.c_[np.cos(ang), np.sin(ang)]])
    s = abod_scores(X, 6)
    assert np.all(s[0] < s[1:])


def test_abod_far_point_highest():
    ds = with_outlier(80, 2, seed=8)
    assert abod_scores(ds.X, 20).argmax() == 0


def test_abod_clamped_matches_oracle():
    X = np.random.default_rng(9).normal(size=(10, 3))
    assert rel_close(abod_scores(X, 60), oracles.abod(X, 9))


def test_abod_duplicates_skip_degenerate_pairs():
    X = np.vstack([np.zeros((3, 2)), np.random.default_rng(10).normal(size=(20, 2))])
    s = abod_scores(X, 6)
    assert np.isfinite(s).all()
    assert rel_close(s, oracles.abod(X, 6))


# ---------------------------------------------------------------- iForest

def test_average_path_length_values():
    assert average_path_length(1) == 0.0
    assert average_path_length(2) == 1.0
    c256 = 2 * (np.log(255) + np.euler_gamma) - 2 * 255 / 256
    assert average_path_length(256) == pytest.approx(c256, rel=1e-14)


def test_iforest_deterministic_and_seed_sensitive():
    X = np.random.default_rng(11).normal(size=(300, 3))
    a = iforest_scores(X, 50, seed=42)
    assert a.tobytes() == iforest_scores(X, 50, seed=42).tobytes()
    assert not np.array_equal(a, iforest_scores(X, 50, seed=43))
    assert np.all((a > 0) & (a < 1))


def test_iforest_far_point_highest_mean_over_seeds():
    r = np.random.default_rng(12)
    X = np.vstack([[[10.0, 0.0]], r.normal(size=(300, 2))])
    mean = np.mean([iforest_scores(X, seed=s) for s in range(10)], axis=0)
    assert mean.argmax() == 0


def test_iforest_identical_points_equal():
    s = iforest_scores(np.ones((40, 2)), 20, seed=0)
    assert np.all(s == s[0])


def test_iforest_permutation_in_distribution():
    r = np.random.default_rng(13)
    X = np.vstack([r.normal(size=(200, 3)), r.normal(4, 0.5, size=(10, 3))])
    p = r.permutation(len(X))
    a = np.mean([iforest_scores(X, seed=s) for s in range(10)], axis=0)
    b = np.mean([iforest_scores(X[p], seed=s) for s in range(10)], axis=0)
    inv = np.argsort(p)
    assert spearmanr(a, b[inv]).statistic > 0.95


def test_iforest_feature_subsampling():
    X = np.random.default_rng(14).normal(size=(100, 6))
    s = iforest_scores(X, 20, max_features=0.5, seed=1)
    assert s.shape == (100,) and np.isfinite(s).all()
    with pytest.raises(DetectorError):
        iforest_scores(X, 20, max_features=0.0)
    with pytest.raises(DetectorError):
        iforest_scores(X, 0)


# ---------------------------------------------------------------- registry and properties

def test_spec_defaults_and_validation():
    spec = DetectorSpec("KNN")
    assert spec.params == {"n_neighbors": 60, "method": "mean"}
    assert DetectorSpec("KTHNN").params["method"] == "largest"
    assert DetectorSpec("HBOS").params == {"n_bins": 90, "tolerance": 0.5}
    assert DetectorSpec("IFOREST").params == {"n_estimators": 100, "max_features": 1.0}
    with pytest.raises(DetectorError, match="unknown parameter"):
        DetectorSpec("KNN", {"k": 3})
    with pytest.raises(DetectorError, match="unknown detector"):
        DetectorSpec("OCSVM")
    assert DetectorSpec.from_json(spec.to_json()) == spec
    assert [s.id for s in default_specs()] == list(DETECTOR_IDS)


def test_run_detector_dispatch():
    ds = gaussian(70, 3, seed=15)
    assert np.array_equal(run_detector(DetectorSpec("KNN"), ds), knn_scores(ds.X, 60, "mean"))
    a = run_detector(DetectorSpec("IFOREST", seed=42), ds)
    assert np.array_equal(a, run_detector(DetectorSpec("IFOREST", seed=42), ds))


def test_run_detector_wraps_failures():
    with pytest.raises(DetectorError, match="ABOD"):
        run_detector(DetectorSpec("ABOD"), Dataset("two", np.eye(2)))
    with pytest.raises(DetectorError, match="euclidean"):
        run_detector(DetectorSpec("LOF", {"distance": "manhattan"}), gaussian(10, 2))


@pytest.mark.parametrize("det", DETECTOR_IDS)
def test_far_point_rank_never_drops(det):
    r = np.random.default_rng(16)
    base = r.normal(size=(120, 2))
    ranks = []
    for far in (4.0, 8.0, 16.0, 32.0):
        X = np.vstack([[[far, far]], base])
        s = run_detector(DetectorSpec(det, seed=3), Dataset("m", X))
        ranks.append(int((s > s[0]).sum()))
    assert all(b <= a for a, b in zip(ranks, ranks[1:])), ranks
    assert ranks[-1] == 0


DETERMINISTIC = [d for d in DETECTOR_IDS if d != "IFOREST"]


@settings(max_examples=15, deadline=None)
@given(st.integers(8, 60), st.integers(1, 4), st.integers(0, 10**6))
def test_outputs_finite_and_permutation_equivariant(n, k, seed):
    r = np.random.default_rng(seed)
    X = r.normal(size=(n, k))
    p = r.permutation(n)
    for det in DETERMINISTIC:
        spec = DetectorSpec(det, {"n_neighbors": 10} if "n_neighbors" in DetectorSpec(det).params else {})
        a = run_detector(spec, Dataset("a", X))
        b = run_detector(spec, Dataset("b", X[p]))
        assert a.shape == (n,) and np.isfinite(a).all()
        assert np.allclose(a[p], b, rtol=1e-9, atol=1e-12), det
