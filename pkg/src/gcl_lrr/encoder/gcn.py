"""Two-layer GCN encoder ``H = relu(A relu(A X W0) W1)`` with a hand-written backward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractError


@dataclass(frozen=True)
class EncoderParams:
    w0: np.ndarray  # (D, hidden)
    w1: np.ndarray  # (hidden, d)

    def __post_init__(self):
        if self.w0.ndim != 2 or self.w1.ndim != 2 or self.w0.shape[1] != self.w1.shape[0]:
            raise ContractError(f"inconsistent weight shapes {self.w0.shape}, {self.w1.shape}")

    @property
    def hidden_width(self) -> int:
        return self.w0.shape[1]

    @property
    def embed_width(self) -> int:
        return self.w1.shape[1]

    def to_json(self) -> dict:
        return {"w0": self.w0.tolist(), "w1": self.w1.tolist()}

    @classmethod
    def from_json(cls, raw: dict) -> "EncoderParams":
        return cls(np.asarray(raw["w0"], dtype=np.float64), np.asarray(raw["w1"], dtype=np.float64))


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_params(num_features: int, hidden: int, embed: int, seed: int) -> EncoderParams:
    rng = np.random.default_rng(seed)
    return EncoderParams(glorot(rng, num_features, hidden), glorot(rng, hidden, embed))


@dataclass
class ForwardCache:
    ax: np.ndarray  # A X
    z0: np.ndarray  # A X W0
    a1: np.ndarray  # relu(z0)
    aa1: np.ndarray  # A a1
    z1: np.ndarray  # A a1 W1
    adj: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return np.maximum(self.z1, 0.0)


def forward(params: EncoderParams, x: np.ndarray, adj: np.ndarray) -> ForwardCache:
    n = x.shape[0]
    if adj.shape != (n, n) or x.shape[1] != params.w0.shape[0]:
        raise ContractError(
            f"shape mismatch: X {x.shape}, A {adj.shape}, W0 {params.w0.shape}")
    ax = adj @ x
    z0 = ax @ params.w0
    a1 = np.maximum(z0, 0.0)
    aa1 = adj @ a1
    return ForwardCache(ax, z0, a1, aa1, aa1 @ params.w1, adj)


def gcn_forward(params: EncoderParams, features: np.ndarray, adjacency) -> np.ndarray:
    """Node embeddings for a feature matrix and a (normalized) adjacency."""
    adj = getattr(adjacency, "matrix", adjacency)
    return forward(params, np.asarray(features, dtype=np.float64), np.asarray(adj)).h


def backward(params: EncoderParams, cache: ForwardCache, grad_h: np.ndarray):
    """Return ``(dW0, dW1)`` given ``dL/dH``. ReLU derivative at 0 is taken as 0."""
    dz1 = grad_h * (cache.z1 > 0)
    dw1 = cache.aa1.T @ dz1
    # adjacency is symmetric, so A^T = A
    da1 = cache.adj @ (dz1 @ params.w1.T)
    dz0 = da1 * (cache.z0 > 0)
    dw0 = cache.ax.T @ dz0
    return dw0, dw1
