"""GCL-LRR objective and its gradient-descent training loop."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..errors import ConfigError, NumericalError
from ..graph import GraphBundle, NormalizedAdjacency, ceil_count, normalize_adjacency
from ..seeding import derive_seed
from ..spectral import tnn_embedding, tnn_gradient
from .augment import AugmentationSpec, augment_view
from .gcn import EncoderParams, backward, forward, init_params
from .kmeans import PrototypeSet, cluster_prototypes
from .losses import contrastive_loss_node, contrastive_loss_proto


@dataclass(frozen=True)
class TrainConfig:
    hidden_width: int = 64
    embed_width: int = 32
    tnn_weight: float = 0.10
    rank_ratio: float = 0.2
    node_temperature: float = 0.5
    proto_temperature: float = 0.5
    num_clusters: int | None = None  # None -> number of classes
    epochs: int = 100
    step_size: float = 1e-2
    seed: int = 0
    edge_perturb_ratio: float = 0.2
    feature_mask_ratio: float = 0.2
    node_drop_ratio: float = 0.0
    cosine_eps: float = 1e-8

    def __post_init__(self):
        if self.hidden_width < 1 or self.embed_width < 1:
            raise ConfigError("layer widths must be positive")
        if self.tnn_weight < 0:
            raise ConfigError("tnn_weight must be nonnegative")
        if not 0.0 < self.rank_ratio <= 1.0:
            raise ConfigError("rank_ratio must lie in (0, 1]")
        if self.node_temperature <= 0 or self.proto_temperature <= 0:
            raise ConfigError("temperatures must be positive")
        if self.num_clusters is not None and self.num_clusters < 1:
            raise ConfigError("num_clusters must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.step_size <= 0:
            raise ConfigError("step_size must be positive")
        for name in ("edge_perturb_ratio", "feature_mask_ratio", "node_drop_ratio"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")

    def rank(self, num_nodes: int) -> int:
        """Truncation rank ``ceil(rank_ratio * min(N, d))``; must stay below ``min(N, d)``."""
        cap = min(num_nodes, self.embed_width)
        r0 = ceil_count(self.rank_ratio, cap)
        if r0 >= cap:
            raise ConfigError(
                f"rank ratio {self.rank_ratio} gives r0={r0}, which must be < min(N, d)={cap}")
        return r0

    def clusters(self, bundle: GraphBundle) -> int:
        return bundle.num_classes if self.num_clusters is None else self.num_clusters

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_mapping(cls, raw: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown TrainConfig keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            raw = tomllib.loads(text)
        else:
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from None
        return cls.from_mapping(raw)


@dataclass(frozen=True)
class LossResult:
    total: float
    node: float
    proto: float
    tnn: float
    grad_w0: np.ndarray
    grad_w1: np.ndarray
    prototypes: PrototypeSet
    embeddings: np.ndarray


@dataclass(frozen=True)
class EpochLoss:
    epoch: int
    total: float
    node: float
    proto: float
    tnn: float


def make_views(bundle: GraphBundle, config: TrainConfig, epoch_seed: int):
    views = []
    for tag in (1, 2):
        spec = AugmentationSpec(config.edge_perturb_ratio, config.feature_mask_ratio,
                                config.node_drop_ratio, derive_seed(epoch_seed, tag))
        x, adj = augment_view(bundle, spec)
        views.append((x, adj.matrix))
    return views


def gcl_lrr_loss(bundle: GraphBundle, params: EncoderParams, config: TrainConfig, epoch_seed: int,
                 *, prototypes: PrototypeSet | None = None,
                 adjacency: NormalizedAdjacency | None = None, views=None) -> LossResult:
    """``L_node(H1, H2) + L_proto(H) + tnn_weight * TNN_r0(H H^T)`` and its weight gradients.

    ``H`` is the encoding of the clean graph and ``H1, H2`` of two augmented
    views drawn from ``epoch_seed``. Prototypes come from k-means on ``H``
    unless given, and are held constant in the gradient.
    """
    adj = (adjacency or normalize_adjacency(bundle)).matrix
    x = np.asarray(bundle.features)
    clean = forward(params, x, adj)
    h = clean.h
    if views is None:
        views = make_views(bundle, config, epoch_seed)
    caches = [forward(params, vx, va) for vx, va in views]
    if not all(np.all(np.isfinite(c.h)) for c in (clean, *caches)):
        raise NumericalError("non-finite embeddings")

    if prototypes is None:
        prototypes = cluster_prototypes(h, config.clusters(bundle), derive_seed(epoch_seed, 3))

    node, g1, g2 = contrastive_loss_node(caches[0].h, caches[1].h, config.node_temperature,
                                         eps=config.cosine_eps)
    proto, gh = contrastive_loss_proto(h, prototypes, config.proto_temperature)
    r0 = config.rank(bundle.num_nodes)
    reg = tnn_embedding(h, r0)
    if config.tnn_weight:
        gh = gh + config.tnn_weight * tnn_gradient(h, r0)

    dw0, dw1 = backward(params, clean, gh)
    for cache, g in zip(caches, (g1, g2)):
        a, b = backward(params, cache, g)
        dw0 += a
        dw1 += b
    total = node + proto + config.tnn_weight * reg
    return LossResult(total, node, proto, reg, dw0, dw1, prototypes, h)


def train_encoder(bundle: GraphBundle, config: TrainConfig,
                  initial: EncoderParams | None = None) -> tuple[EncoderParams, list[EpochLoss]]:
    """Plain gradient descent on the GCL-LRR objective for ``config.epochs`` epochs.

    The trace records the loss evaluated at the start of each epoch, before
    that epoch's update.
    """
    config.rank(bundle.num_nodes)  # validate up front
    params = initial or init_params(bundle.num_features, config.hidden_width,
                                    config.embed_width, derive_seed(config.seed, 0))
    adjacency = normalize_adjacency(bundle)
    trace: list[EpochLoss] = []
    for epoch in range(config.epochs):
        with np.errstate(over="ignore", invalid="ignore"):
            try:
                res = gcl_lrr_loss(bundle, params, config, derive_seed(config.seed, 1, epoch),
                                   adjacency=adjacency)
            except NumericalError as exc:
                raise NumericalError(str(exc), epoch=epoch) from None
        if not np.isfinite(res.total):
            raise NumericalError("non-finite training loss", epoch=epoch)
        trace.append(EpochLoss(epoch, res.total, res.node, res.proto, res.tnn))
        params = EncoderParams(params.w0 - config.step_size * res.grad_w0,
                               params.w1 - config.step_size * res.grad_w1)
        if not (np.all(np.isfinite(params.w0)) and np.all(np.isfinite(params.w1))):
            raise NumericalError("non-finite encoder weights", epoch=epoch)
    return params, trace


def write_loss_trace(path, trace: list[EpochLoss]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "total", "node", "proto", "tnn"])
        for e in trace:
            w.writerow([e.epoch, repr(e.total), repr(e.node), repr(e.proto), repr(e.tnn)])

