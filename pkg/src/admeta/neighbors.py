"""Exact Euclidean neighbor search shared by meta-features and detectors."""

from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    # cdist evaluates each pair from coordinate differences (no Gram trick), so
    # distances are translation-stable and exactly symmetric.
    return cdist(X, X, metric="euclidean")


def neighbor_order(D: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest neighbors of every row, self excluded.

    Ties are broken by ascending row index.
    """
    n = D.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    masked = D.copy()
    np.fill_diagonal(masked, np.inf)
    return np.argsort(masked, axis=1, kind="stable")[:, :k]


def knn_table(X: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(indices, distances) of the ``k`` nearest neighbors, each of shape (N, k)."""
    D = pairwise_distances(X)
    idx = neighbor_order(D, k)
    return idx, np.take_along_axis(D, idx, axis=1)
