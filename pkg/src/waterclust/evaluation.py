"""Clustering scores and the damping-factor sweep."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from waterclust.affinity import (
    DEFAULT_MAX_ITER,
    DEFAULT_STABLE_WINDOW,
    ClusterResult,
    check_damping,
    run_ap,
)
from waterclust.errors import ConfigError, InputError

DEFAULT_GRID = (0.5, 0.6, 0.7, 0.8, 0.9)


def _pair_means(D, labels):
    D = np.asarray(D, dtype=np.float64)
    labels = np.asarray(labels)
    n = D.shape[0]
    if D.ndim != 2 or D.shape != (n, n):
        raise InputError(f"dissimilarity matrix must be square, got {D.shape}")
    if labels.shape != (n,):
        raise InputError(f"{labels.shape[0] if labels.ndim else 0} labels for {n} records")
    if n < 2:
        raise InputError("silhouette needs at least 2 records")
    iu = np.triu_indices(n, k=1)
    same = (labels[:, None] == labels[None, :])[iu]
    d = D[iu]
    within = float(d[same].mean()) if same.any() else 0.0
    between = float(d[~same].mean()) if (~same).any() else None
    return within, between


def silhouette_global(D, labels) -> float:
    """Pooled-pair silhouette ``(d2 - d1) / max(d1, d2)``.

    ``d1`` is the mean distance over all same-cluster pairs, ``d2`` over all
    cross-cluster pairs. A single cluster, or ``max(d1, d2) == 0``, scores 0.
    """
    within, between = _pair_means(D, labels)
    if between is None:
        return 0.0
    top = max(within, between)
    if top == 0.0:
        return 0.0
    return (between - within) / top


def silhouette_points(D, labels) -> float:
    """Mean per-point silhouette (Rousseeuw), a diagnostic next to the pooled score.

    Points in singleton clusters score 0; fewer than 2 clusters gives 0.
    """
    D = np.asarray(D, dtype=np.float64)
    labels = np.asarray(labels)
    _pair_means(D, labels)
    uniq, codes = np.unique(labels, return_inverse=True)
    if len(uniq) < 2:
        return 0.0
    onehot = np.zeros((len(labels), len(uniq)))
    onehot[np.arange(len(labels)), codes] = 1.0
    sums = D @ onehot
    sizes = onehot.sum(axis=0)
    own = sizes[codes]
    a = np.where(own > 1, sums[np.arange(len(labels)), codes] / np.maximum(own - 1, 1), 0.0)
    means = sums / sizes
    means[np.arange(len(labels)), codes] = np.inf
    b = means.min(axis=1)
    top = np.maximum(a, b)
    s = np.where((own > 1) & (top > 0), (b - a) / np.where(top > 0, top, 1.0), 0.0)
    return float(s.mean())


@dataclass
class SweepEntry:
    gamma: float
    silhouette: float
    n_clusters: int
    converged: bool
    iterations: int
    silhouette_points: float | None = None


@dataclass
class SweepResult:
    entries: list
    results: list
    best_index: int

    @property
    def best_gamma(self) -> float:
        return self.entries[self.best_index].gamma

    @property
    def best(self) -> SweepEntry:
        return self.entries[self.best_index]

    @property
    def best_result(self) -> ClusterResult:
        return self.results[self.best_index]


def damping_sweep(
    S,
    D,
    grid=DEFAULT_GRID,
    max_iter=DEFAULT_MAX_ITER,
    stable_window=DEFAULT_STABLE_WINDOW,
    workers=1,
    point_silhouette=False,
    engine="auto",
) -> SweepResult:
    """Run affinity propagation for every damping factor in ``grid``.

    Entries come back in increasing damping order; the best one has the
    highest pooled silhouette, the smaller damping winning ties.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ConfigError("damping grid is empty")
    if len(set(grid)) != len(grid):
        raise ConfigError(f"damping grid has duplicates: {grid}")
    for g in grid:
        check_damping(g)

    def one(g):
        return run_ap(S, g, max_iter=max_iter, stable_window=stable_window, engine=engine)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, grid))
    else:
        results = [one(g) for g in grid]

    entries = []
    for g, res in zip(grid, results):
        entries.append(
            SweepEntry(
                gamma=g,
                silhouette=silhouette_global(D, res.labels),
                n_clusters=res.n_clusters,
                converged=res.converged,
                iterations=res.iterations_run,
                silhouette_points=silhouette_points(D, res.labels) if point_silhouette else None,
            )
        )
    best = 0
    for i, e in enumerate(entries):
        if e.silhouette > entries[best].silhouette:
            best = i
    return SweepResult(entries, results, best)
