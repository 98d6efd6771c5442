"""Global/local Mahalanobis distance profiles and the 19 profile meta-features.

Each observation gets four distances: to the leave-one-out mean of the whole
dataset (global) and to the mean of its s nearest neighbors for s in
(20, 60, 80) (local). Each distance profile is summarised by its range and
three range-normalised spreads, and each local profile is compared with the
global one through the mean local/global ratio ("locality").
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .neighbors import neighbor_order, pairwise_distances

NEIGHBORHOODS = (20, 60, 80)
PROFILE_KINDS = ("G",) + tuple(f"L{s}" for s in NEIGHBORHOODS)
FEATURE_NAMES = tuple(
    f"{stat}_{kind}" for kind in PROFILE_KINDS for stat in ("TR", "CM", "TH", "TQ")
) + tuple(f"LOC{s}" for s in NEIGHBORHOODS)
N_FEATURES = len(FEATURE_NAMES)

RIDGE_REL = 1e-6
RIDGE_ABS = 1e-12
EPS_DIV = 1e-12


@dataclass(frozen=True)
class DistanceProfile:
    kind: str
    values: np.ndarray


def regularize(S: np.ndarray) -> np.ndarray:
    """Add ``lambda * I`` with ``lambda = max(1e-6 * trace(S) / K, 1e-12)``.

    Works on a single (K, K) matrix or a stack (..., K, K).
    """
    K = S.shape[-1]
    tr = np.trace(S, axis1=-2, axis2=-1)
    lam = np.maximum(RIDGE_REL * tr / K, RIDGE_ABS)
    return S + lam[..., None, None] * np.eye(K)


def mahalanobis(z: np.ndarray, mu: np.ndarray, S_inv: np.ndarray) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    S_inv = np.atleast_2d(np.asarray(S_inv, dtype=float))
    if z.shape != mu.shape or S_inv.shape != (z.size, z.size):
        raise ValueError(f"dimension mismatch: z{z.shape}, mu{mu.shape}, S_inv{S_inv.shape}")
    d = z - mu
    return float(np.sqrt(max(float(d @ S_inv @ d), 0.0)))


def _quadratic_form(S: np.ndarray, d: np.ndarray) -> np.ndarray:
    # d^T S^{-1} d via a linear solve; S is (K, K) or (N, K, K), d is (N, K)
    if S.ndim == 2:
        sol = np.linalg.solve(S, d.T).T
    else:
        sol = np.linalg.solve(S, d[..., None])[..., 0]
    q = np.einsum("nk,nk->n", d, sol)
    return np.sqrt(np.maximum(q, 0.0))


def _check_size(dataset: Dataset) -> None:
    if dataset.n < 3:
        raise ValueError(f"{dataset.name}: meta-features need N >= 3, got N={dataset.n}")


def global_profile(dataset: Dataset, cov: np.ndarray | None = None) -> DistanceProfile:
    """Distance of each point to the mean of all other points.

    ``cov`` overrides the (regularized) full-sample covariance; it is used as given.
    """
    _check_size(dataset)
    X = dataset.X
    n = X.shape[0]
    mu = X.mean(axis=0)
    loo_mean = (n * mu - X) / (n - 1)
    if cov is None:
        S = regularize(np.atleast_2d(np.cov(X, rowvar=False)))
    else:
        S = np.atleast_2d(np.asarray(cov, dtype=float))
        if S.shape != (dataset.k, dataset.k):
            raise ValueError(f"cov shape {S.shape} does not match K={dataset.k}")
    return DistanceProfile("G", _quadratic_form(S, X - loo_mean))


def _local_from_order(X: np.ndarray, order: np.ndarray, s: int) -> np.ndarray:
    s = min(s, X.shape[0] - 1)
    nb = X[order[:, :s]]  # (N, s, K)
    mu = nb.mean(axis=1)
    c = nb - mu[:, None, :]
    S = np.einsum("nsk,nsl->nkl", c, c) / (s - 1)
    return _quadratic_form(regularize(S), X - mu)


def local_profile(dataset: Dataset, s: int, order: np.ndarray | None = None) -> DistanceProfile:
    """Distances to the mean/covariance of each point's ``s`` nearest neighbors.

    ``s`` is clamped to N - 1. ``order`` may pass a precomputed neighbor order
    (at least ``s`` columns) to avoid recomputing distances.
    """
    _check_size(dataset)
    if s < 2:
        raise ValueError(f"neighborhood size must be >= 2, got {s}")
    s_eff = min(s, dataset.n - 1)
    if order is None:
        order = neighbor_order(pairwise_distances(dataset.X), s_eff)
    return DistanceProfile(f"L{s}", _local_from_order(dataset.X, order, s_eff))


def profile_features(profile: DistanceProfile | np.ndarray) -> tuple[float, float, float, float]:
    """(TR, CM, TH, TQ) of a distance profile; all zero-spread features are 0 when TR = 0."""
    v = np.asarray(getattr(profile, "values", profile), dtype=float)
    if v.size == 0:
        raise ValueError("empty profile")
    vmax, vmin = float(v.max()), float(v.min())
    tr = vmax - vmin
    if tr == 0.0:
        return 0.0, 0.0, 0.0, 0.0
    p25, p50, p75 = np.percentile(v, [25, 50, 75], method="linear")
    return tr, float(p75 - p25) / tr, float(vmax - p50) / tr, float(vmax - p75) / tr


def locality(local: DistanceProfile | np.ndarray, global_: DistanceProfile | np.ndarray) -> float:
    loc = np.asarray(getattr(local, "values", local), dtype=float)
    glob = np.asarray(getattr(global_, "values", global_), dtype=float)
    if loc.shape != glob.shape:
        raise ValueError(f"profile length mismatch: {loc.shape} vs {glob.shape}")
    keep = glob > EPS_DIV
    if not keep.any():
        return 0.0
    return float(np.mean(loc[keep] / glob[keep]))


def extract(dataset: Dataset) -> np.ndarray:
    """The 19 meta-features of ``dataset`` in :data:`FEATURE_NAMES` order."""
    _check_size(dataset)
    X = dataset.X
    g = global_profile(dataset)
    s_max = min(max(NEIGHBORHOODS), dataset.n - 1)
    order = neighbor_order(pairwise_distances(X), s_max)
    locals_ = [DistanceProfile(f"L{s}", _local_from_order(X, order, s)) for s in NEIGHBORHOODS]
    out: list[float] = []
    for prof in (g, *locals_):
        out.extend(profile_features(prof))
    out.extend(locality(lp, g) for lp in locals_)
    return np.array(out, dtype=np.float64)


def extract_corpus(datasets) -> np.ndarray:
    return np.vstack([extract(ds) for ds in datasets])
