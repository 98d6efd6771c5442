"""Native unsupervised anomaly detectors.

Every detector maps a dataset to one finite score per row, higher meaning more
anomalous. Parameters default to the fixed (untuned) settings of the base
detector set.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from .data import Dataset, make_rng
from .neighbors import knn_table

logger = logging.getLogger(__name__)

DETECTOR_IDS = ("LOF", "KNN", "KTHNN", "HBOS", "IFOREST", "PCA", "COPOD", "ABOD")

# LOF: floor for the mean reachability distance, so duplicated points get a
# huge but finite density and two such densities have ratio 1.
LOF_REACH_FLOOR = 1e-10
HBOS_EMPTY_HEIGHT = 1e-9
ABOD_MIN_DIST = 1e-12
PCA_VARIANCE_KEPT = 0.95
IFOREST_SUBSAMPLE = 256


class DetectorError(RuntimeError):
    """A detector could not score a dataset."""


def _clamp_k(k: int, n: int, name: str, low: int = 1) -> int:
    if n < low + 1:
        raise DetectorError(f"{name} needs N >= {low + 1}, got N={n}")
    if k < low:
        raise DetectorError(f"{name}: k must be >= {low}, got {k}")
    if k > n - 1:
        logger.warning("%s: k=%d exceeds N-1, clamping to %d", name, k, n - 1)
        return n - 1
    return k


def _as_X(data: Dataset | np.ndarray) -> np.ndarray:
    X = data.X if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise DetectorError("empty dataset")
    return X


# ---------------------------------------------------------------- neighbors

def knn_scores(data, k: int = 60, method: str = "mean") -> np.ndarray:
    X = _as_X(data)
    k = _clamp_k(k, X.shape[0], "kNN")
    _, dist = knn_table(X, k)
    if method == "mean":
        return dist.mean(axis=1)
    if method == "largest":
        return dist[:, -1].copy()
    raise DetectorError(f"unknown kNN method {method!r}")


def lof_scores(data, k: int = 60) -> np.ndarray:
    X = _as_X(data)
    k = _clamp_k(k, X.shape[0], "LOF")
    idx, dist = knn_table(X, k)
    k_distance = dist[:, -1]
    reach = np.maximum(dist, k_distance[idx])
    lrd = 1.0 / np.maximum(reach.mean(axis=1), LOF_REACH_FLOOR)
    return (lrd[idx] / lrd[:, None]).mean(axis=1)


def abod_scores(data, k: int = 60) -> np.ndarray:
    """Negated angle-based outlier factor over the k-neighborhood (fast ABOD).

    For each point, the variance over neighbor pairs of
    <a - z, b - z> / (|a - z|^2 |b - z|^2). Pairs with a vanishing
    distance are skipped; a point with no valid pair scores 0.
    """
    X = _as_X(data)
    n = X.shape[0]
    if n < 3:
        raise DetectorError(f"ABOD needs N >= 3, got N={n}")
    k = _clamp_k(k, n, "ABOD", low=2)
    idx, _ = knn_table(X, k)
    iu, ju = np.triu_indices(k, 1)
    scores = np.empty(n)
    chunk = max(1, 2_000_000 // (k * k))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        diff = X[idx[lo:hi]] - X[lo:hi, None, :]  # (m, k, K)
        gram = np.einsum("mak,mbk->mab", diff, diff)
        sq = np.einsum("maa->ma", gram)
        norm = np.sqrt(sq)
        num = gram[:, iu, ju]
        den = sq[:, iu] * sq[:, ju]
        valid = (norm[:, iu] >= ABOD_MIN_DIST) & (norm[:, ju] >= ABOD_MIN_DIST)
        wcos = np.where(valid, num / np.where(valid, den, 1.0), 0.0)
        cnt = valid.sum(axis=1)
        safe = np.maximum(cnt, 1)
        mean = wcos.sum(axis=1) / safe
        var = (np.where(valid, (wcos - mean[:, None]) ** 2, 0.0)).sum(axis=1) / safe
        scores[lo:hi] = np.where(cnt > 0, -var, 0.0)
    return scores


# ---------------------------------------------------------------- histogram

def hbos_scores(data, n_bins: int = 90, tolerance: float = 0.5) -> np.ndarray:
    """Histogram-based outlier score with equal-width, max-normalised bins.

    ``tolerance`` is accepted for parameter compatibility and not used.
    """
    X = _as_X(data)
    if n_bins < 2:
        raise DetectorError(f"HBOS needs n_bins >= 2, got {n_bins}")
    n, K = X.shape
    scores = np.zeros(n)
    for j in range(K):
        col = X[:, j]
        lo, hi = col.min(), col.max()
        if hi == lo:
            continue  # one occupied bin, height 1, contributes log(1) = 0
        width = (hi - lo) / n_bins
        b = np.floor((col - lo) / width).astype(np.int64)
        b = np.clip(b, 0, n_bins - 1)
        counts = np.bincount(b, minlength=n_bins).astype(float)
        heights = counts / counts.max()
        heights[heights == 0] = HBOS_EMPTY_HEIGHT
        scores += -np.log(heights[b])
    return scores


# ---------------------------------------------------------------- copula

def _ecdf_avg(col: np.ndarray) -> np.ndarray:
    from scipy.stats import rankdata

    return rankdata(col, method="average") / col.size


def copod_scores(data) -> np.ndarray:
    """Empirical-copula outlier score with skewness-corrected tail choice."""
    X = _as_X(data)
    n, K = X.shape
    if n < 3:
        raise DetectorError(f"COPOD needs N >= 3, got N={n}")
    scores = np.zeros(n)
    for j in range(K):
        col = X[:, j]
        u_left = -np.log(_ecdf_avg(col))
        u_right = -np.log(_ecdf_avg(-col))
        c = col - col.mean()
        m2 = np.mean(c * c)
        skew = np.mean(c * c * c) / m2**1.5 if m2 > 0 else 0.0
        sgn = np.sign(skew)
        u_skew = u_left * -np.sign(sgn - 1) + u_right * np.sign(sgn + 1)
        scores += np.maximum(u_skew, (u_left + u_right) / 2)
    return scores


# ---------------------------------------------------------------- PCA

def pca_scores(data) -> np.ndarray:
    """Eigenvalue-weighted projection energy on retained components plus
    residual energy scaled by the mean discarded eigenvalue.

    Retains the fewest leading components explaining >= 95% of variance.
    """
    X = _as_X(data)
    n = X.shape[0]
    if n < 3:
        raise DetectorError(f"PCA needs N >= 3, got N={n}")
    Xc = X - X.mean(axis=0)
    _, sv, Vt = np.linalg.svd(Xc, full_matrices=False)
    ev = sv**2 / (n - 1)
    total = ev.sum()
    if total <= 0 or ev[0] <= 0:
        return np.zeros(n)
    tiny = ev[0] * 1e-12
    frac = np.cumsum(ev) / total
    m = int(np.searchsorted(frac, PCA_VARIANCE_KEPT - 1e-12) + 1)
    m = min(m, ev.size)
    proj = Xc @ Vt.T
    keep = ev[:m] > tiny
    score = (proj[:, :m][:, keep] ** 2 / ev[:m][keep]).sum(axis=1)
    if m < ev.size:
        resid_mass = ev[m:].mean()
        if resid_mass > tiny:
            resid = (Xc**2).sum(axis=1) - (proj[:, :m] ** 2).sum(axis=1)
            score = score + np.maximum(resid, 0.0) / resid_mass
    return score


# ---------------------------------------------------------------- iForest

def average_path_length(n: np.ndarray | float) -> np.ndarray:
    """Expected path length of an unsuccessful BST search over ``n`` items."""
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    out[n == 2] = 1.0
    big = n > 2
    nb = n[big]
    out[big] = 2.0 * (np.log(nb - 1.0) + np.euler_gamma) - 2.0 * (nb - 1.0) / nb
    return out


@dataclass
class _Tree:
    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    leaf_value: list[float] = field(default_factory=list)

    def add(self) -> int:
        for lst, v in ((self.feature, -1), (self.threshold, 0.0), (self.left, -1),
                       (self.right, -1), (self.leaf_value, 0.0)):
            lst.append(v)
        return len(self.feature) - 1


def _grow(X: np.ndarray, features: np.ndarray, max_depth: int, rng: np.random.Generator) -> tuple:
    tree = _Tree()
    stack = [(np.arange(X.shape[0]), 0, tree.add())]
    while stack:
        rows, depth, node = stack.pop()
        sub = X[rows][:, features]
        if depth >= max_depth or rows.size <= 1:
            tree.leaf_value[node] = depth + float(average_path_length(rows.size))
            continue
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        candidates = np.flatnonzero(hi > lo)
        if candidates.size == 0:
            tree.leaf_value[node] = depth + float(average_path_length(rows.size))
            continue
        c = candidates[rng.integers(candidates.size)]
        t = rng.uniform(lo[c], hi[c])
        go_left = sub[:, c] < t
        tree.feature[node] = int(features[c])
        tree.threshold[node] = float(t)
        l, r = tree.add(), tree.add()
        tree.left[node], tree.right[node] = l, r
        stack.append((rows[~go_left], depth + 1, r))
        stack.append((rows[go_left], depth + 1, l))
    return (np.array(tree.feature), np.array(tree.threshold), np.array(tree.left),
            np.array(tree.right), np.array(tree.leaf_value))


def _path_lengths(X: np.ndarray, tree: tuple) -> np.ndarray:
    feature, threshold, left, right, leaf_value = tree
    node = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[node] >= 0
    while active.any():
        a = np.flatnonzero(active)
        nd = node[a]
        go_left = X[rows[a], feature[nd]] < threshold[nd]
        node[a] = np.where(go_left, left[nd], right[nd])
        active = feature[node] >= 0
    return leaf_value[node]


def iforest_scores(data, n_estimators: int = 100, max_features: float = 1.0, seed: int = 0) -> np.ndarray:
    X = _as_X(data)
    if n_estimators < 1:
        raise DetectorError(f"n_estimators must be >= 1, got {n_estimators}")
    if not 0.0 < max_features <= 1.0:
        raise DetectorError(f"max_features must be in (0, 1], got {max_features}")
    n, K = X.shape
    if n < 2:
        raise DetectorError(f"iForest needs N >= 2, got N={n}")
    psi = min(IFOREST_SUBSAMPLE, n)
    max_depth = int(math.ceil(math.log2(psi)))
    n_feat = max(1, int(max_features * K))
    rng = make_rng(seed)
    depth_sum = np.zeros(n)
    for _ in range(n_estimators):
        sample = rng.choice(n, size=psi, replace=False)
        feats = np.sort(rng.choice(K, size=n_feat, replace=False)) if n_feat < K else np.arange(K)
        tree = _grow(X[sample], feats, max_depth, rng)
        depth_sum += _path_lengths(X, tree)
    mean_depth = depth_sum / n_estimators
    return 2.0 ** (-mean_depth / float(average_path_length(psi)))


# ---------------------------------------------------------------- registry

@dataclass(frozen=True)
class DetectorSpec:
    id: str
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.id not in REGISTRY:
            raise DetectorError(f"unknown detector id {self.id!r}")
        _, defaults = REGISTRY[self.id]
        unknown = set(self.params) - set(defaults)
        if unknown:
            raise DetectorError(f"{self.id}: unknown parameter(s) {sorted(unknown)}; "
                                f"allowed: {sorted(defaults)}")
        object.__setattr__(self, "params", {**defaults, **dict(self.params)})

    def to_json(self) -> dict:
        return {"id": self.id, "params": dict(self.params), "seed": self.seed}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "DetectorSpec":
        return cls(obj["id"], obj.get("params", {}), int(obj.get("seed", 0)))


REGISTRY: dict[str, tuple[Callable[..., np.ndarray], dict[str, Any]]] = {
    "LOF": (lambda X, n_neighbors, distance, seed: _euclid(lof_scores, X, n_neighbors, distance),
            {"n_neighbors": 60, "distance": "euclidean"}),
    "KNN": (lambda X, n_neighbors, method, seed: knn_scores(X, n_neighbors, method),
            {"n_neighbors": 60, "method": "mean"}),
    "KTHNN": (lambda X, n_neighbors, method, seed: knn_scores(X, n_neighbors, method),
              {"n_neighbors": 60, "method": "largest"}),
    "HBOS": (lambda X, n_bins, tolerance, seed: hbos_scores(X, n_bins, tolerance),
             {"n_bins": 90, "tolerance": 0.5}),
    "IFOREST": (lambda X, n_estimators, max_features, seed: iforest_scores(X, n_estimators, max_features, seed),
                {"n_estimators": 100, "max_features": 1.0}),
    "PCA": (lambda X, seed: pca_scores(X), {}),
    "COPOD": (lambda X, seed: copod_scores(X), {}),
    "ABOD": (lambda X, n_neighbors, seed: abod_scores(X, n_neighbors), {"n_neighbors": 60}),
}


def _euclid(fn, X, k, distance):
    if distance != "euclidean":
        raise DetectorError(f"only euclidean distance is supported, got {distance!r}")
    return fn(X, k)


def default_specs(seed: int = 0) -> list[DetectorSpec]:
    return [DetectorSpec(d, seed=seed) for d in DETECTOR_IDS]


def run_detector(spec: DetectorSpec, dataset: Dataset) -> np.ndarray:
    """Score ``dataset`` with ``spec``; any failure surfaces as :class:`DetectorError`."""
    fn, _ = REGISTRY[spec.id]
    try:
        scores = np.asarray(fn(dataset.X, seed=spec.seed, **spec.params), dtype=np.float64)
    except DetectorError:
        raise
    except Exception as exc:  # noqa: BLE001 - any failure becomes a recorded missing cell
        raise DetectorError(f"{spec.id} failed on {dataset.name}: {exc}") from exc
    if scores.shape != (dataset.n,) or not np.isfinite(scores).all():
        raise DetectorError(f"{spec.id} produced invalid scores on {dataset.name}")
    return scores
