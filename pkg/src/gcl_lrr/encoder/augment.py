"""Graph augmentations for contrastive views.

Every view keeps all N node indices so row i of both views is node i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..graph import GraphBundle, NormalizedAdjacency, ceil_count, normalize_edges


@dataclass(frozen=True)
class AugmentationSpec:
    edge_perturb_ratio: float = 0.2
    feature_mask_ratio: float = 0.2
    node_drop_ratio: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name in ("edge_perturb_ratio", "feature_mask_ratio", "node_drop_ratio"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")


def _edge_keys(edges: np.ndarray, n: int) -> np.ndarray:
    return edges[:, 0].astype(np.int64) * n + edges[:, 1]


def perturb_edges(edges: np.ndarray, n: int, ratio: float, rng: np.random.Generator) -> np.ndarray:
    """Remove ``ceil(ratio*|E|)`` edges and add as many uniformly drawn non-edges."""
    k = ceil_count(ratio, len(edges))
    if k == 0:
        return edges
    total_pairs = n * (n - 1) // 2
    if total_pairs - len(edges) < k:
        raise ConfigError("not enough non-edges to perturb the requested number of edges")
    drop = rng.choice(len(edges), size=k, replace=False)
    kept = np.delete(edges, drop, axis=0)
    existing = set(_edge_keys(edges, n).tolist())
    added: list[tuple[int, int]] = []
    while len(added) < k:
        s, t = rng.integers(0, n, size=2)
        if s == t:
            continue
        s, t = (int(s), int(t)) if s < t else (int(t), int(s))
        key = s * n + t
        if key in existing:
            continue
        existing.add(key)
        added.append((s, t))
    return np.concatenate([kept, np.array(added, dtype=np.int64)], axis=0)


def augment_view(bundle: GraphBundle, spec: AugmentationSpec) -> tuple[np.ndarray, NormalizedAdjacency]:
    """One augmented view ``(X', A')`` of the bundle."""
    rng = np.random.default_rng(spec.seed)
    n, d = bundle.num_nodes, bundle.num_features
    x = np.array(bundle.features, copy=True)
    edges = np.asarray(bundle.edges)

    edges = perturb_edges(edges, n, spec.edge_perturb_ratio, rng)

    cols = rng.choice(d, size=ceil_count(spec.feature_mask_ratio, d), replace=False)
    x[:, cols] = 0.0

    k = ceil_count(spec.node_drop_ratio, n)
    if k:
        dropped = rng.choice(n, size=k, replace=False)
        x[dropped] = 0.0
        gone = np.isin(edges[:, 0], dropped) | np.isin(edges[:, 1], dropped)
        edges = edges[~gone]

    return x, normalize_edges(n, edges)
