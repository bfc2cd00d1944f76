"""Node-level InfoNCE and prototype contrastive losses with exact gradients."""

from __future__ import annotations

import numpy as np
from scipy.special import log_softmax, softmax

from ..errors import ContractError, DegenerateInputError
from .kmeans import PrototypeSet


def _normalize_rows(h: np.ndarray, eps: float):
    norms = np.linalg.norm(h, axis=1)
    if eps == 0.0 and np.any(norms == 0.0):
        raise DegenerateInputError("cosine similarity is undefined for a zero row")
    norms = np.maximum(norms, eps)
    return h / norms[:, None], norms


def _normalize_backward(unit: np.ndarray, norms: np.ndarray, grad_unit: np.ndarray, eps: float):
    radial = np.sum(unit * grad_unit, axis=1, keepdims=True)
    # clamped rows have a constant norm, so no radial correction
    radial = np.where((norms > eps)[:, None] | (eps == 0.0), radial, 0.0)
    return (grad_unit - unit * radial) / norms[:, None]


def contrastive_loss_node(h1: np.ndarray, h2: np.ndarray, temperature: float, *, eps: float = 0.0):
    """InfoNCE between two views; row i of each view is the positive pair.

    ``loss = -(1/N) sum_i log softmax_j(s(h1_i, h2_j) / temperature)[i]``
    with ``s`` the cosine similarity. Returns ``(loss, dL/dh1, dL/dh2)``.

    With ``eps == 0`` a zero row raises :class:`DegenerateInputError`;
    a positive ``eps`` clamps row norms from below instead.
    """
    h1 = np.asarray(h1, dtype=np.float64)
    h2 = np.asarray(h2, dtype=np.float64)
    if h1.shape != h2.shape:
        raise ContractError(f"view shapes differ: {h1.shape} vs {h2.shape}")
    n = len(h1)
    a, na = _normalize_rows(h1, eps)
    b, nb = _normalize_rows(h2, eps)
    logits = a @ b.T / temperature
    logp = log_softmax(logits, axis=1)
    loss = -float(np.trace(logp)) / n
    g = (np.exp(logp) - np.eye(n)) / (n * temperature)
    ga = g @ b
    gb = g.T @ a
    return loss, _normalize_backward(a, na, ga, eps), _normalize_backward(b, nb, gb, eps)


def contrastive_loss_proto(h: np.ndarray, protos: PrototypeSet, temperature: float):
    """Softmax over prototype logits ``h_i . c_k / temperature`` toward each node's own cluster.

    Prototypes are constants here. Returns ``(loss, dL/dh)``.
    """
    h = np.asarray(h, dtype=np.float64)
    assign = np.asarray(protos.assignments)
    if len(assign) != len(h):
        raise ContractError("assignments must cover every node")
    if np.any(protos.cluster_sizes == 0):
        raise ContractError("prototype set has an empty cluster")
    n = len(h)
    c = protos.prototypes
    logits = h @ c.T / temperature
    logp = log_softmax(logits, axis=1)
    loss = -float(logp[np.arange(n), assign].sum()) / n
    g = softmax(logits, axis=1)
    g[np.arange(n), assign] -= 1.0
    return loss, (g @ c) / (n * temperature)
