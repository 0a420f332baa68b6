"""Exact K-NN graphs, graph geodesics, and the neighbour-based transformation samplers."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .datasets import Dataset

log = logging.getLogger(__name__)

EUCLIDEAN = "euclidean"
GEODESIC = "geodesic"


@dataclass(frozen=True)
class NeighborGraph:
    k: int
    neighbors: np.ndarray  # (n, k) int, ascending distance, ties by index
    distances: np.ndarray  # (n, k) float

    @property
    def n(self) -> int:
        return self.neighbors.shape[0]


def _block_rows(n: int, d: int) -> int:
    return max(1, min(n, int(4e6 // max(1, n + d))))


def build_knn(dataset: Dataset, k: int) -> NeighborGraph:
    """Exact k nearest neighbours under the Euclidean metric.

    Candidates are screened with the squared-norm expansion, then re-ranked
    on directly recomputed distances so the ordering (and index tie-break)
    does not depend on cancellation error.
    """
    x = dataset.features
    n, d = x.shape
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in 1..{n - 1}, got {k}")
    sq = np.einsum("ij,ij->i", x, x)
    nbrs = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k))
    step = _block_rows(n, d)
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        d2 = sq[lo:hi, None] + sq[None, :] - 2.0 * (x[lo:hi] @ x.T)
        np.maximum(d2, 0.0, out=d2)
        rows = np.arange(hi - lo)
        d2[rows, rows + lo] = np.inf
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
        slack = 1e-9 * (1.0 + kth) + 1e-12 * (sq[lo:hi] + sq.max())
        for r in range(hi - lo):
            i = lo + r
            cand = np.flatnonzero(d2[r] <= kth[r] + slack[r])
            exact = np.sqrt(((x[cand] - x[i]) ** 2).sum(axis=1))
            order = np.lexsort((cand, exact))[:k]
            nbrs[i] = cand[order]
            dists[i] = exact[order]
    return NeighborGraph(k, nbrs, dists)


@dataclass(frozen=True)
class GeodesicTable:
    dist: np.ndarray  # (n, n), +inf across components

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def reachable(self, i: int) -> np.ndarray:
        """Indices j with 0 < g_ij < inf, ascending by g_ij then by j."""
        row = self.dist[i]
        idx = np.flatnonzero((row > 0) & np.isfinite(row))
        return idx[np.lexsort((idx, row[idx]))]

    @property
    def reachable_sets(self) -> list[np.ndarray]:
        return [self.reachable(i) for i in range(self.n)]


def knn_adjacency(graph: NeighborGraph) -> csr_matrix:
    """Symmetrized sparse adjacency; an edge exists if either endpoint lists the other."""
    n, k = graph.neighbors.shape
    rows = np.repeat(np.arange(n), k)
    cols = graph.neighbors.ravel()
    w = graph.distances.ravel()
    r = np.concatenate([rows, cols])
    c = np.concatenate([cols, rows])
    ww = np.concatenate([w, w])
    # Keep one entry per (r, c) so duplicates are not summed by the constructor.
    key = r * n + c
    _, first = np.unique(key, return_index=True)
    return csr_matrix((ww[first], (r[first], c[first])), shape=(n, n))


def geodesics(graph: NeighborGraph, dataset: Optional[Dataset] = None,
              cache_dir: Optional[Path] = None) -> GeodesicTable:
    """All-pairs shortest paths over the symmetrized K-NN graph (Dijkstra from every source).

    When ``cache_dir`` and ``dataset`` are given the distance matrix is stored as
    ``geodesic-<sha256>-k<K>.npy`` (float64, row-major) and reused on later calls.
    """
    if dataset is not None and dataset.n != graph.n:
        raise ValueError("graph and dataset sizes differ")
    path = None
    if cache_dir is not None and dataset is not None:
        path = Path(cache_dir) / f"geodesic-{dataset.digest()}-k{graph.k}.npy"
        if path.exists():
            dist = np.load(path)
            if dist.shape == (graph.n, graph.n):
                return GeodesicTable(dist)
    dist = dijkstra(knn_adjacency(graph), directed=False)
    # Both directions of a path are summed in different orders; keep the
    # table exactly symmetric.
    dist = np.minimum(dist, dist.T)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.save(path, dist)
    return GeodesicTable(dist)


@dataclass(frozen=True)
class TransformSampler:
    """Per-point candidate lists; a transformation of x_i is a uniform draw from candidates[i]."""

    kind: str
    candidates: tuple  # tuple of int arrays
    k0: int
    beta: float

    def __len__(self) -> int:
        return len(self.candidates)

    def sample(self, indices, rng: np.random.Generator) -> np.ndarray:
        return sample_batch_transforms(self, indices, rng)


def make_sampler_e(graph: NeighborGraph, beta: float) -> TransformSampler:
    k0 = graph.k
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    skip = int(np.floor(beta * k0))
    if skip >= k0:
        raise ValueError(f"beta={beta} with K0={k0} leaves no candidate neighbours")
    cands = tuple(np.array(row[skip:], dtype=np.int64) for row in graph.neighbors)
    return TransformSampler(EUCLIDEAN, cands, k0, beta)


def make_sampler_g(table: GeodesicTable, k0: int, beta: float) -> TransformSampler:
    """The max(floor(beta*K0), 1) geodesically farthest reachable points of each x_i."""
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must lie in [0, 1), got {beta}")
    want = max(int(np.floor(beta * k0)), 1)
    cands = []
    for i in range(table.n):
        row = table.dist[i]
        m = np.flatnonzero((row > 0) & np.isfinite(row))
        if m.size == 0:
            raise ValueError(
                f"point {i} has no geodesically reachable neighbour; increase K0 (currently {k0})")
        # farthest first; equal distances go to the smaller index
        far = m[np.lexsort((m, -row[m]))]
        cands.append(np.sort(far[:want]))
    return TransformSampler(GEODESIC, tuple(cands), k0, beta)


def sample_batch_transforms(sampler: TransformSampler, indices, rng: np.random.Generator) -> np.ndarray:
    """One uniform draw from candidates[i] for every batch element i."""
    indices = np.asarray(indices, dtype=np.int64)
    sizes = np.array([sampler.candidates[i].size for i in indices])
    picks = np.floor(rng.random(indices.size) * sizes).astype(np.int64)
    picks = np.minimum(picks, sizes - 1)
    return np.array([sampler.candidates[i][p] for i, p in zip(indices, picks)], dtype=np.int64)


def build_sampler(dataset: Dataset, kind: str, k0: int, beta: float,
                  cache_dir: Optional[Path] = None) -> TransformSampler:
    graph = build_knn(dataset, k0)
    if kind == EUCLIDEAN:
        return make_sampler_e(graph, beta)
    if kind == GEODESIC:
        table = geodesics(graph, dataset, cache_dir=cache_dir)
        sampler = make_sampler_g(table, k0, beta)
        del table
        return sampler
    raise ValueError(f"unknown sampler kind {kind!r}")


def vat_radii(dataset: Dataset, scale: float = 0.25, rank: int = 10) -> np.ndarray:
    """Adaptive VAT radius: ``scale`` times the distance to the ``rank``-th nearest neighbour."""
    if dataset.n <= rank:
        raise ValueError(f"need more than {rank} points for VAT radii, got {dataset.n}")
    graph = build_knn(dataset, rank)
    return scale * graph.distances[:, rank - 1]
