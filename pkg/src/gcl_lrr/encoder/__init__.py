"""GCN encoder trained with contrastive and low-rank objectives."""

from .augment import AugmentationSpec, augment_view
from .gcn import EncoderParams, gcn_forward, init_params
from .kmeans import PrototypeSet, cluster_prototypes
from .losses import contrastive_loss_node, contrastive_loss_proto
from .training import EpochLoss, LossResult, TrainConfig, gcl_lrr_loss, train_encoder, write_loss_trace

__all__ = [
    "AugmentationSpec", "augment_view", "EncoderParams", "gcn_forward", "init_params",
    "PrototypeSet", "cluster_prototypes", "contrastive_loss_node", "contrastive_loss_proto",
    "EpochLoss", "LossResult", "TrainConfig", "gcl_lrr_loss", "train_encoder", "write_loss_trace",
]
