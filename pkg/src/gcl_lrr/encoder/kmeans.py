"""Deterministic k-means (Lloyd iterations, k-means++ seeding) for prototype construction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class PrototypeSet:
    prototypes: np.ndarray  # (K, d); row k is the mean of cluster k
    assignments: np.ndarray  # (N,) cluster index per node
    cluster_sizes: np.ndarray  # (K,)
    inertia_trace: tuple = field(default=(), compare=False)

    @property
    def num_clusters(self) -> int:
        return len(self.prototypes)


def _sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d = (x**2).sum(1)[:, None] - 2.0 * x @ c.T + (c**2).sum(1)[None, :]
    return np.maximum(d, 0.0)


def kmeans_plusplus(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    closest = _sq_dists(x, x[chosen])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            # all remaining points coincide with a chosen center
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        closest = np.minimum(closest, _sq_dists(x, x[idx : idx + 1])[:, 0])
    return x[chosen].copy()


def _centroids(x: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    sums = np.zeros((k, x.shape[1]))
    np.add.at(sums, labels, x)
    counts = np.bincount(labels, minlength=k)
    return sums / counts[:, None]


def cluster_prototypes(h: np.ndarray, num_clusters: int, seed: int, *,
                       max_iter: int = 100, tol: float = 1e-8) -> PrototypeSet:
    """Cluster the rows of ``h`` and return per-cluster means.

    Empty clusters are re-seeded with the point farthest from its current
    centroid. Iteration stops after ``max_iter`` Lloyd steps or once no
    centroid moves by more than ``tol``.
    """
    x = np.asarray(h, dtype=np.float64)
    n = len(x)
    k = int(num_clusters)
    if not 1 <= k <= n:
        raise ConfigError(f"need 1 <= K <= N, got K={k}, N={n}")
    rng = np.random.default_rng(seed)
    centers = kmeans_plusplus(x, k, rng)
    inertia = []
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        dist = _sq_dists(x, centers)
        labels = np.argmin(dist, axis=1)
        counts = np.bincount(labels, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            own = dist[np.arange(n), labels]
            # only steal from clusters that keep at least one point
            own = np.where(np.bincount(labels, minlength=k)[labels] > 1, own, -1.0)
            far = int(np.argmax(own))
            labels[far] = empty
        new = _centroids(x, labels, k)
        inertia.append(float(((x - new[labels]) ** 2).sum()))
        shift = float(np.max(np.abs(new - centers)))
        centers = new
        if shift < tol:
            break
    sizes = np.bincount(labels, minlength=k)
    return PrototypeSet(centers, labels, sizes, tuple(inertia))
