"""Synthetic labeled corpora with planted global, local and collective anomalies.

Inliers come from a mixture of rotated anisotropic Gaussians. Anomaly
placement is measured in Mahalanobis units of the generating clusters:

* global: beyond every inlier's nearest-cluster distance (and >= 6)
* local: 2-3 RMS radii (sqrt(K) units) from one cluster, while staying within
  the inlier 99th percentile of distance to the overall inlier mean/covariance
* collective: one tight micro-cluster of >= 3 points away from a cluster
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import Corpus, Dataset, make_rng, split_sizes, write_corpus
from .neighbors import knn_table

GLOBAL_MIN_RADIUS = 6.0
GLOBAL_MARGIN = 1.2
CLUSTER_SEPARATION = 1.5
MAX_LAYOUT_TRIES = 50
MAX_MEAN_TRIES = 200
MAX_RADIUS_STEPS = 400
RADIUS_GROWTH = 1.25
GLOBAL_KNN = 60


class SynthError(ValueError):
    """The requested synthetic dataset cannot be generated."""


@dataclass(frozen=True)
class SynthSpec:
    n_inliers: int
    n_anomalies: int
    k_features: int
    n_clusters: int = 1
    anomaly_mix: tuple[float, float, float] = (1.0, 0.0, 0.0)
    scale_spread: float = 1.0
    seed: int = 0
    anisotropy: float = 1.0
    name: str | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "anomaly_mix", tuple(float(f) for f in self.anomaly_mix))
        if self.n_anomalies < 1:
            raise SynthError("n_anomalies must be >= 1")
        if self.n_inliers < 2 or self.k_features < 1 or self.n_clusters < 1:
            raise SynthError("need n_inliers >= 2, k_features >= 1, n_clusters >= 1")
        if len(self.anomaly_mix) != 3 or min(self.anomaly_mix) < 0:
            raise SynthError("anomaly_mix must be three nonnegative fractions")
        if abs(sum(self.anomaly_mix) - 1.0) > 1e-9:
            raise SynthError(f"anomaly_mix must sum to 1, got {sum(self.anomaly_mix)!r}")
        if self.n_anomalies / (self.n_inliers + self.n_anomalies) > 0.2 + 1e-12:
            raise SynthError("anomaly ratio exceeds 0.2")
        if self.scale_spread < 1.0 or self.anisotropy < 1.0:
            raise SynthError("scale_spread and anisotropy must be >= 1")

    def to_json(self) -> dict:
        return {**asdict(self), "anomaly_mix": list(self.anomaly_mix)}


@dataclass
class _Cluster:
    mean: np.ndarray
    chol: np.ndarray  # covariance = chol @ chol.T
    scale: float

    def whiten(self, X: np.ndarray) -> np.ndarray:
        from scipy.linalg import solve_triangular

        return solve_triangular(self.chol, (X - self.mean).T, lower=True).T

    def radius(self, X: np.ndarray) -> np.ndarray:
        return np.linalg.norm(self.whiten(np.atleast_2d(X)), axis=1)

    def at(self, w: np.ndarray) -> np.ndarray:
        return self.mean + self.chol @ w


def _unit(rng: np.random.Generator, k: int) -> np.ndarray:
    v = rng.standard_normal(k)
    return v / np.linalg.norm(v)


def _rotation(rng: np.random.Generator, k: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    return q * np.sign(np.diag(r))


def _layout(spec: SynthSpec, rng: np.random.Generator) -> list[_Cluster]:
    K, C = spec.k_features, spec.n_clusters
    shapes = []
    for _ in range(C):
        scale = math.exp(rng.uniform(0.0, math.log(spec.scale_spread)))
        half = math.log(spec.anisotropy) / 2
        sds = scale * np.exp(rng.uniform(-half, half, size=K))
        chol = np.linalg.cholesky(_cov_from(rng, sds, K))
        shapes.append((chol, scale, float(sds.max()) * math.sqrt(K)))
    r_max = max(s[2] for s in shapes)
    box = CLUSTER_SEPARATION * 2 * r_max * max(1.0, C ** (1.0 / K))
    for _ in range(MAX_LAYOUT_TRIES):
        means: list[np.ndarray] = []
        for chol, _, r in shapes:
            for _ in range(MAX_MEAN_TRIES):
                mu = rng.uniform(-box, box, size=K)
                if all(np.linalg.norm(mu - m) >= CLUSTER_SEPARATION * (r + shapes[j][2])
                       for j, m in enumerate(means)):
                    means.append(mu)
                    break
            else:
                break
        if len(means) == C:
            return [_Cluster(m, chol, scale) for m, (chol, scale, _) in zip(means, shapes)]
    raise SynthError(f"could not space {C} clusters in {K} dimension(s) after bounded retries")


def _cov_from(rng: np.random.Generator, sds: np.ndarray, k: int) -> np.ndarray:
    Q = _rotation(rng, k)
    return (Q * sds**2) @ Q.T


def _mixture_counts(spec: SynthSpec) -> list[int]:
    n, a = spec.n_anomalies, spec.anomaly_mix
    counts = split_sizes(n, a) if n > 0 else [0, 0, 0]
    g, l, c = counts
    if 0 < c < 3:
        if n >= 3:
            need = 3 - c
            take_g = min(g, need)
            g -= take_g
            l -= need - take_g
            c = 3
        else:
            g += c
            c = 0
    return [g, l, c]


def _inlier_mahalanobis(clusters: list[_Cluster], X: np.ndarray) -> np.ndarray:
    return np.min(np.stack([c.radius(X) for c in clusters]), axis=0)


def _global_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mu = X.mean(axis=0)
    S = np.atleast_2d(np.cov(X, rowvar=False))
    S = S + 1e-9 * np.trace(S) / S.shape[0] * np.eye(S.shape[0])
    return mu, np.linalg.inv(S)


def _global_dist(x: np.ndarray, mu: np.ndarray, S_inv: np.ndarray) -> float:
    d = x - mu
    return float(np.sqrt(max(d @ S_inv @ d, 0.0)))


def generate_dataset(spec: SynthSpec) -> Dataset:
    """Draw one labeled dataset for ``spec`` (deterministic in ``spec.seed``)."""
    rng = make_rng(spec.seed)
    K, C = spec.k_features, spec.n_clusters
    if spec.n_inliers < 3 * C:
        raise SynthError(f"{spec.n_inliers} inliers cannot populate {C} clusters")
    clusters = _layout(spec, rng)

    weights = rng.dirichlet(np.full(C, 3.0))
    sizes = split_sizes(spec.n_inliers - 3 * C, weights)
    inliers = []
    for cl, m in zip(clusters, sizes):
        Z = rng.standard_normal((m + 3, K))
        inliers.append(cl.mean + Z @ cl.chol.T)
    X_in = np.vstack(inliers)

    n_glob, n_loc, n_coll = _mixture_counts(spec)
    inlier_near = _inlier_mahalanobis(clusters, X_in)
    g_floor = max(GLOBAL_MIN_RADIUS, GLOBAL_MARGIN * float(inlier_near.max()))
    mu_g, Sinv_g = _global_stats(X_in)
    g_in = np.sqrt(np.maximum(np.einsum("nk,kl,nl->n", X_in - mu_g, Sinv_g, X_in - mu_g), 0))
    g_p99 = float(np.percentile(g_in, 99))
    rms = math.sqrt(K)

    # global anomalies must also clear every inlier's typical neighbor distance, so a
    # wide cluster cannot hide them when a tight cluster sets the Mahalanobis scale
    if n_glob:
        _, nn = knn_table(X_in, min(GLOBAL_KNN, len(X_in) - 1))
        e_floor = GLOBAL_MARGIN * float(nn.mean(axis=1).max())

    anomalies: list[np.ndarray] = []
    # global: far from every cluster, pushed outward along a random ray
    for _ in range(n_glob):
        cl = clusters[rng.integers(C)]
        u = _unit(rng, K)
        r = g_floor * rng.uniform(1.0, 1.5)
        for _ in range(MAX_RADIUS_STEPS):
            x = cl.at(u * r)
            if (_inlier_mahalanobis(clusters, x[None])[0] >= g_floor
                    and np.sqrt(((X_in - x) ** 2).sum(axis=1)).min() >= e_floor):
                anomalies.append(x)
                break
            r *= RADIUS_GROWTH
        else:
            raise SynthError("could not place a global anomaly")

    # local: a few RMS radii off one cluster, inconspicuous globally
    tight = np.array([1.0 / c.scale for c in clusters])
    for _ in range(n_loc):
        cl = clusters[rng.choice(C, p=tight / tight.sum())]
        u = _unit(rng, K)
        target = rng.uniform(2.0, 3.0) * rms
        if _global_dist(cl.at(u * target), mu_g, Sinv_g) > g_p99:
            lo, hi = 0.0, target
            for _ in range(50):
                mid = (lo + hi) / 2
                if _global_dist(cl.at(u * mid), mu_g, Sinv_g) <= g_p99:
                    lo = mid
                else:
                    hi = mid
            target = lo
        anomalies.append(cl.at(u * target))

    # collective: one dense micro-cluster
    if n_coll:
        cl = clusters[rng.integers(C)]
        center = cl.at(_unit(rng, K) * rng.uniform(2.0, 3.0) * rms)
        spread = 0.05 * cl.scale
        anomalies.extend(center + spread * rng.standard_normal((n_coll, K)))

    X = np.vstack([X_in, np.array(anomalies).reshape(-1, K)])
    y = np.r_[np.zeros(len(X_in), dtype=np.int64), np.ones(len(anomalies), dtype=np.int64)]
    order = rng.permutation(len(X))
    return Dataset(spec.name or f"synth_{spec.seed}", X[order], y[order])


# ------------------------------------------------------------------ corpora

@dataclass(frozen=True)
class CorpusRanges:
    n_range: tuple[int, int] = (100, 2000)
    k_range: tuple[int, int] = (3, 50)
    cluster_range: tuple[int, int] = (1, 5)
    anomaly_ratio: tuple[float, float] = (0.02, 0.12)
    scale_spread: tuple[float, float] = (1.0, 8.0)
    anisotropy: tuple[float, float] = (1.0, 30.0)
    regimes: tuple[str, ...] = ("global", "local", "collective", "mixed")


def _log_uniform_int(rng: np.random.Generator, lo: int, hi: int) -> int:
    return int(min(hi, max(lo, round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))))


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def sample_spec(rng: np.random.Generator, ranges: CorpusRanges, name: str) -> SynthSpec:
    n = _log_uniform_int(rng, *ranges.n_range)
    k = _log_uniform_int(rng, *ranges.k_range)
    regime = ranges.regimes[rng.integers(len(ranges.regimes))]
    if regime == "global":
        mix = (1.0, 0.0, 0.0)
    elif regime == "local":
        mix = (0.0, 1.0, 0.0)
    elif regime == "collective":
        mix = (0.0, 0.0, 1.0)
    else:
        mix = tuple(float(v) for v in rng.dirichlet(np.ones(3)))
    lo_c, hi_c = ranges.cluster_range
    if mix[1] > 0.5:
        lo_c = max(lo_c, 2)
    c = int(rng.integers(lo_c, max(lo_c, hi_c) + 1))
    ratio = rng.uniform(*ranges.anomaly_ratio)
    n_anom = max(1, int(round(ratio * n)))
    if regime == "collective":
        # a micro-cluster smaller than typical neighborhoods
        n_anom = int(rng.integers(3, max(4, min(41, int(0.15 * n)))))
    elif mix[2] > 0 and n_anom < 3:
        n_anom = 3
    return SynthSpec(
        n_inliers=n - n_anom, n_anomalies=n_anom, k_features=k, n_clusters=c,
        anomaly_mix=mix, scale_spread=_log_uniform(rng, *ranges.scale_spread),
        seed=int(rng.integers(0, 2**63)), anisotropy=_log_uniform(rng, *ranges.anisotropy),
        name=name,
    )


def corpus_specs(n_datasets: int, base_seed: int, ranges: CorpusRanges = CorpusRanges()) -> list[SynthSpec]:
    if n_datasets < 1:
        raise SynthError("n_datasets must be >= 1")
    width = max(4, len(str(n_datasets - 1)))
    return [sample_spec(make_rng(base_seed, i), ranges, f"synth_{i:0{width}d}") for i in range(n_datasets)]


def generate_corpus(n_datasets: int, base_seed: int, ranges: CorpusRanges = CorpusRanges()) -> Corpus:
    return Corpus(tuple(generate_dataset(s) for s in corpus_specs(n_datasets, base_seed, ranges)))


def write_synth_corpus(n_datasets: int, base_seed: int, directory: str | Path,
                       ranges: CorpusRanges = CorpusRanges()) -> Corpus:
    """Generate a corpus and write one CSV per dataset plus ``manifest.json``."""
    specs = corpus_specs(n_datasets, base_seed, ranges)
    corpus = Corpus(tuple(generate_dataset(s) for s in specs))
    directory = Path(directory)
    write_corpus(corpus, directory)
    manifest = {"base_seed": base_seed, "n_datasets": n_datasets,
                "ranges": asdict(ranges), "specs": [s.to_json() for s in specs]}
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    return corpus
