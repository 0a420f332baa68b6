"""Clustering accuracy under the best label permutation, and a K-means baseline."""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment


def hungarian(cost) -> np.ndarray:
    """Minimum-cost perfect assignment; returns ``perm`` with row i assigned to column perm[i]."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix has NaN or infinite entries")
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(cost.shape[0], dtype=np.int64)
    perm[rows] = cols
    return perm


def confusion_matrix(y_true, y_pred, n_clusters: int) -> np.ndarray:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred must have equal length")
    for name, y in (("y_true", y_true), ("y_pred", y_pred)):
        if y.size and (y.min() < 0 or y.max() >= n_clusters):
            raise ValueError(f"{name} has labels outside 0..{n_clusters - 1}")
    counts = np.zeros((n_clusters, n_clusters), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return counts


def clustering_accuracy(y_true, y_pred, n_clusters: int = None) -> float:
    """ACC in percent: 100 * max over label permutations of the matched fraction."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if n_clusters is None:
        n_clusters = int(max(y_true.max(initial=0), y_pred.max(initial=0))) + 1
    counts = confusion_matrix(y_true, y_pred, n_clusters)
    perm = hungarian(-counts)
    matched = counts[np.arange(n_clusters), perm].sum()
    return 100.0 * matched / y_true.size


def _kmeanspp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = [x[rng.integers(n)]]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            j = int(rng.integers(n))
        else:
            j = int(np.searchsorted(np.cumsum(d2), rng.random() * total, side="right"))
            j = min(j, n - 1)
        centers.append(x[j])
        d2 = np.minimum(d2, ((x - x[j]) ** 2).sum(axis=1))
    return np.array(centers)


def kmeans(x, n_clusters: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-10) -> np.ndarray:
    """Lloyd iterations from k-means++ seeds (PCG64 stream seeded with ``seed``).

    An emptied cluster is re-seeded at the point farthest from its assigned centre.
    """
    x = np.asarray(getattr(x, "features", x), dtype=np.float64)
    n = x.shape[0]
    if not 1 <= n_clusters <= n:
        raise ValueError(f"n_clusters must lie in 1..{n}, got {n_clusters}")
    rng = np.random.Generator(np.random.PCG64(seed))
    centers = _kmeanspp(x, n_clusters, rng)
    labels = np.full(n, -1)
    sq = (x ** 2).sum(axis=1)
    for _ in range(max_iter):
        d2 = sq[:, None] - 2.0 * x @ centers.T + (centers ** 2).sum(axis=1)[None, :]
        new = np.argmin(d2, axis=1)
        new_centers = centers.copy()
        for c in range(n_clusters):
            members = new == c
            if members.any():
                new_centers[c] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(d2[np.arange(n), new]))
                new_centers[c] = x[far]
                new[far] = c
        shift = ((new_centers - centers) ** 2).sum()
        centers = new_centers
        if np.array_equal(new, labels) or shift <= tol:
            labels = new
            break
        labels = new
    return labels
