"""Synthetic benchmarks and CSV ingestion for feature-vector datasets.

Randomness comes from numpy's PCG64 bit generator (64-bit state, seeded with
the integer ``seed``). Gaussian noise uses the Box-Muller transform on PCG64
uniforms rather than numpy's ziggurat sampler, so the stream is reproducible
from the two documented primitives alone.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


@dataclass
class Dataset:
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "dataset"
    n_clusters: Optional[int] = field(default=None)

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError(f"features must be a non-empty 2-D matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain NaN or Inf")
        self.features = x
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (x.shape[0],):
                raise ValueError(f"labels must have length {x.shape[0]}, got shape {y.shape}")
            if y.size and not np.issubdtype(y.dtype, np.integer):
                if not np.all(y == np.round(y)):
                    raise ValueError("labels must be integers")
            y = y.astype(np.int64)
            if np.any(y < 0):
                raise ValueError("labels must be nonnegative")
            if self.n_clusters is None:
                self.n_clusters = int(y.max()) + 1
            elif np.any(y >= self.n_clusters):
                raise ValueError(f"labels must lie in 0..{self.n_clusters - 1}")
            self.labels = y

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def digest(self) -> str:
        """SHA-256 over features (and labels when present); used for caches and manifests."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.features).tobytes())
        h.update(str(self.features.shape).encode())
        if self.labels is not None:
            h.update(np.ascontiguousarray(self.labels).tobytes())
        return h.hexdigest()


def _gaussian(rng: np.random.Generator, size: int) -> np.ndarray:
    # Box-Muller; 1 - u keeps the log argument in (0, 1].
    half = (size + 1) // 2
    u1 = 1.0 - rng.random(half)
    u2 = rng.random(half)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.concatenate([r * np.cos(2.0 * math.pi * u2), r * np.sin(2.0 * math.pi * u2)])
    return z[:size]


def _add_noise(points: np.ndarray, noise: float, seed: int) -> np.ndarray:
    if noise == 0:
        return points
    rng = np.random.Generator(np.random.PCG64(seed))
    return points + noise * _gaussian(rng, points.size).reshape(points.shape)


def make_two_moons(n: int = 5000, noise: float = 0.05, seed: int = 0) -> Dataset:
    """Two interleaving half circles; moon 0 gets ceil(n/2) points, moon 1 floor(n/2)."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if noise < 0:
        raise ValueError(f"noise must be nonnegative, got {noise}")
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, math.pi, n0)
    t1 = np.linspace(0.0, math.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    x = _add_noise(np.vstack([upper, lower]), noise, seed)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return Dataset(x, y, name="two-moons", n_clusters=2)


def make_two_rings(n: int = 5000, noise: float = 0.01, factor: float = 0.35, seed: int = 0) -> Dataset:
    """Outer unit circle (label 0) and inner circle of radius ``factor`` (label 1)."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if noise < 0:
        raise ValueError(f"noise must be nonnegative, got {noise}")
    if not 0.0 < factor < 1.0:
        raise ValueError(f"factor must lie in (0, 1), got {factor}")
    n0 = (n + 1) // 2
    n1 = n - n0
    t0 = np.linspace(0.0, 2.0 * math.pi, n0, endpoint=False)
    t1 = np.linspace(0.0, 2.0 * math.pi, n1, endpoint=False)
    outer = np.column_stack([np.cos(t0), np.sin(t0)])
    inner = factor * np.column_stack([np.cos(t1), np.sin(t1)])
    x = _add_noise(np.vstack([outer, inner]), noise, seed)
    y = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    return Dataset(x, y, name="two-rings", n_clusters=2)


GENERATORS = {"two-moons": make_two_moons, "two-rings": make_two_rings}


def save_csv(dataset: Dataset, path) -> None:
    header = [f"f{j}" for j in range(dataset.d)]
    if dataset.labels is not None:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(dataset.n):
            row = [format(float(v), ".17g") for v in dataset.features[i]]
            if dataset.labels is not None:
                row.append(str(int(dataset.labels[i])))
            w.writerow(row)


def load_csv(path, n_clusters: Optional[int] = None, name: Optional[str] = None) -> Dataset:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_label = bool(header) and header[-1] == "label"
    feat_cols = header[:-1] if has_label else header
    if not feat_cols or feat_cols != [f"f{j}" for j in range(len(feat_cols))]:
        raise ValueError(f"{path}: malformed header {rows[0]!r}; expected f0,f1,...[,label]")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError(f"{path}: no data rows")
    width = len(header)
    x = np.empty((len(body), len(feat_cols)))
    y = np.empty(len(body), dtype=np.int64) if has_label else None
    for i, r in enumerate(body):
        if len(r) != width:
            raise ValueError(f"{path}: ragged row {i + 2}: {len(r)} fields under {width}-column header")
        try:
            x[i] = [float(v) for v in r[: len(feat_cols)]]
        except ValueError:
            raise ValueError(f"{path}: non-numeric cell in row {i + 2}") from None
        if has_label:
            try:
                y[i] = int(r[-1])
            except ValueError:
                raise ValueError(f"{path}: non-integer label in row {i + 2}") from None
    return Dataset(x, y, name=name or path.stem, n_clusters=n_clusters)


def save_labels(labels, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("index,pred_label\n")
        for i, v in enumerate(labels):
            fh.write(f"{i},{int(v)}\n")


def load_labels(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [h.strip() for h in rows[0]] != ["index", "pred_label"]:
        raise ValueError(f"{path}: expected header index,pred_label")
    body = [r for r in rows[1:] if r]
    out = np.empty(len(body), dtype=np.int64)
    for k, r in enumerate(body):
        if len(r) != 2 or int(r[0]) != k:
            raise ValueError(f"{path}: bad row {k + 2}")
        out[k] = int(r[1])
    return out
