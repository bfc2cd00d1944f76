"""Linear transductive classifiers on frozen node embeddings.

Two flavours live here. :func:`train_transductive` fits ``softmax(H W)`` by
gradient descent on the KL divergence to the observed labels of the labeled
nodes. :func:`mse_gd_trajectory` runs the squared-loss update whose residuals
have the closed form evaluated by :func:`closed_form_residual`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from .errors import ConfigError, ContractError
from .graph import NoisyLabels, SplitSpec
from .spectral import gram_spectrum, sym_eig


@dataclass(frozen=True)
class ClassifierState:
    weights: np.ndarray  # (d, C)
    step_size: float
    iterations_done: int
    loss_trace: tuple = ()


def top_eigenvalue(h: np.ndarray) -> float:
    return float(gram_spectrum(h)[0])


def default_step_size(h: np.ndarray, scale: float = 0.9) -> float:
    """``scale / lambda_1`` of ``H H^T``."""
    lam1 = top_eigenvalue(h)
    if lam1 <= 0:
        raise ConfigError("embedding gram matrix is zero; no admissible step size")
    return scale / lam1


def _check_step(eta: float, lam1: float) -> None:
    if not (eta > 0 and eta * lam1 < 1.0):
        raise ConfigError(f"step size must lie in (0, 1/lambda_1) = (0, {1.0 / lam1 if lam1 > 0 else np.inf:.6g}), got {eta}")


def kl_loss(h: np.ndarray, w: np.ndarray, y: np.ndarray, rows) -> tuple[float, np.ndarray]:
    """Mean KL(y_i || softmax(h_i W)) over ``rows`` and its gradient in ``W``.

    For one-hot targets this is the cross-entropy.
    """
    hr = h[rows]
    yr = y[rows]
    logits = hr @ w
    logp = log_softmax(logits, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        ent = np.where(yr > 0, yr * np.log(np.where(yr > 0, yr, 1.0)), 0.0)
    m = len(rows)
    loss = float((ent - yr * logp).sum()) / m
    grad = hr.T @ (np.exp(logp) - yr) / m
    return loss, grad


def train_transductive(h: np.ndarray, labels: NoisyLabels | np.ndarray, split: SplitSpec,
                       eta: float | None = None, epochs: int = 500, *,
                       validation=None, patience: int = 20, min_delta: float = 1e-7):
    """Full-batch gradient descent from ``W = 0`` on the labeled KL objective.

    Training stops early once the monitored loss (on ``validation`` rows when
    given, otherwise the training rows) fails to improve by ``min_delta`` for
    ``patience`` consecutive epochs. With a validation set, the weights with
    the lowest validation loss are returned.

    Returns ``(state, probabilities)`` with ``probabilities = softmax(H W)``
    for every node.
    """
    h = np.asarray(h, dtype=np.float64)
    y = np.asarray(getattr(labels, "observed", labels), dtype=np.float64)
    if y.shape[0] != h.shape[0] or split.num_nodes != h.shape[0]:
        raise ContractError("embeddings, labels and split must cover the same nodes")
    lam1 = top_eigenvalue(h)
    if eta is None:
        eta = 0.9 / lam1
    _check_step(eta, lam1)
    if epochs < 0:
        raise ConfigError("epochs must be nonnegative")

    train_rows = np.asarray(split.labeled)
    val_rows = None
    if validation is not None:
        val_rows = np.asarray(validation, dtype=np.int64)
        train_rows = np.setdiff1d(train_rows, val_rows)
        if len(train_rows) == 0:
            raise ConfigError("validation set leaves no training rows")

    w = np.zeros((h.shape[1], y.shape[1]))
    best_w, best, stale, trace = w, np.inf, 0, []
    done = 0
    for _ in range(epochs):
        loss, grad = kl_loss(h, w, y, train_rows)
        trace.append(loss)
        w = w - eta * grad
        done += 1
        monitored = loss if val_rows is None else kl_loss(h, w, y, val_rows)[0]
        if monitored < best - min_delta:
            best, stale = monitored, 0
            best_w = w
        else:
            stale += 1
            if stale >= patience:
                break
    if val_rows is None:
        best_w = w
    return ClassifierState(best_w, float(eta), done, tuple(trace)), softmax(h @ best_w, axis=1)


def predict_labels(probabilities: np.ndarray, subset=None) -> np.ndarray:
    """Row-wise argmax; ties go to the lowest class index."""
    p = np.asarray(probabilities)
    if subset is not None:
        p = p[np.asarray(subset, dtype=np.int64)]
    return np.argmax(p, axis=1)


def accuracy(predicted, clean_onehot: np.ndarray, subset) -> float:
    subset = np.asarray(subset, dtype=np.int64)
    return float(np.mean(np.asarray(predicted) == np.argmax(clean_onehot[subset], axis=1)))


def write_predictions(path, predicted: np.ndarray, observed: np.ndarray, clean: np.ndarray,
                      split: SplitSpec) -> None:
    """CSV with columns node, predicted, observed, clean, is_test."""
    is_test = np.zeros(len(predicted), dtype=bool)
    is_test[split.unlabeled] = True
    obs = np.argmax(observed, axis=1)
    cln = np.argmax(clean, axis=1)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "predicted", "observed", "clean", "is_test"])
        for i in range(len(predicted)):
            w.writerow([i, int(predicted[i]), int(obs[i]), int(cln[i]), int(is_test[i])])


# ------------------------------------------------------------------ MSE variant


@dataclass(frozen=True)
class Trajectory:
    """Residuals ``H W_t - clean`` for t = 0..T, split by labeled / unlabeled rows."""

    labeled: np.ndarray  # (T+1, m, C)
    unlabeled: np.ndarray  # (T+1, u, C)
    weights: np.ndarray  # final W_T


def mse_gd_trajectory(h: np.ndarray, labels: NoisyLabels, split: SplitSpec, eta: float,
                      t: int) -> Trajectory:
    """Iterate ``W <- W - eta [H]_L^T ([H W]_L - [Y]_L)`` from zero for ``t`` steps."""
    h = np.asarray(h, dtype=np.float64)
    _check_step(eta, top_eigenvalue(h))
    if t < 0:
        raise ConfigError("t must be nonnegative")
    y = np.asarray(labels.observed)
    clean = np.asarray(labels.clean)
    lab, unl = split.labeled, split.unlabeled
    hl = h[lab]
    w = np.zeros((h.shape[1], y.shape[1]))
    res_l = np.empty((t + 1, len(lab), y.shape[1]))
    res_u = np.empty((t + 1, len(unl), y.shape[1]))
    for step in range(t + 1):
        f = h @ w
        res_l[step] = f[lab] - clean[lab]
        res_u[step] = f[unl] - clean[unl]
        if step < t:
            w = w - eta * hl.T @ (hl @ w - y[lab])
    return Trajectory(res_l, res_u, w)


def _check_kernel(k_ll: np.ndarray, *mats: np.ndarray) -> np.ndarray:
    k_ll = np.asarray(k_ll, dtype=np.float64)
    if k_ll.ndim != 2 or k_ll.shape[0] != k_ll.shape[1]:
        raise ContractError("K_LL must be square")
    for mat in mats:
        if np.asarray(mat).shape[0] != k_ll.shape[0]:
            raise ContractError("label blocks must have one row per labeled node")
    return k_ll


def contraction_factors(k_ll: np.ndarray, eta: float, t: int, *, strict: bool = True):
    """Eigen-decomposition of ``K_LL`` plus per-mode ``(1 - eta mu)^t`` factors."""
    dec = sym_eig(k_ll)
    mu = dec.eigenvalues
    lam1 = max(float(mu[0]), 0.0)
    if not eta > 0:
        raise ConfigError("step size must be positive")
    if lam1 > 0 and (eta * lam1 > 1.0 or (strict and eta * lam1 >= 1.0)):
        raise ConfigError(f"step size {eta} is not below 1/lambda_1(K_LL) = {1.0 / lam1:.6g}")
    if t < 0:
        raise ConfigError("t must be nonnegative")
    return dec.eigenvectors, (1.0 - eta * mu) ** t


def closed_form_residual(k_ll: np.ndarray, clean_l: np.ndarray, noise_l: np.ndarray, eta: float,
                         t: int) -> np.ndarray:
    """``-(I - eta K)^t Y_L + eta K sum_{s<t} (I - eta K)^s N_L`` via the eigenbasis of K.

    Per eigenmode ``mu`` the noise coefficient ``eta mu sum_s (1 - eta mu)^s``
    collapses to ``1 - (1 - eta mu)^t``, which is 0 for ``mu = 0``.
    """
    k_ll = _check_kernel(k_ll, clean_l, noise_l)
    q, decay = contraction_factors(k_ll, eta, t, strict=False)
    qy = q.T @ np.asarray(clean_l, dtype=np.float64)
    qn = q.T @ np.asarray(noise_l, dtype=np.float64)
    return q @ (-decay[:, None] * qy + (1.0 - decay)[:, None] * qn)
