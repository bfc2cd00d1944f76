"""Graph contrastive learning with low-rank regularization for noisy node classification."""

__version__ = "0.1.0"
