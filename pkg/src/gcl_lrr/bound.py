"""Test-loss upper bound for the transductive linear classifier.

For embeddings ``H`` with gram ``K = H H^T``, a labeled set of size ``m`` and
``u`` unlabeled nodes, the bound after ``t`` squared-loss GD steps is

    (2 c0 / m) (L1 + L2) + c0 KC(K) + c0 x / u

with ``L1 = ||(I - eta K_LL)^t Y_L||_F^2`` (clean labels),
``L2 = ||eta K_LL sum_{s<t} (I - eta K_LL)^s N_L||_F^2`` (label noise) and
``KC`` the kernel complexity. ``c0`` has no closed form and is an input.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .classifier import _check_kernel, contraction_factors, mse_gd_trajectory
from .errors import ConfigError, ContractError
from .graph import NoisyLabels, SplitSpec
from .spectral import gram, gram_spectrum, kernel_complexity


def l1_term(k_ll: np.ndarray, clean_l: np.ndarray, eta: float, t: int) -> float:
    k_ll = _check_kernel(k_ll, clean_l)
    q, decay = contraction_factors(k_ll, eta, t)
    return float(np.sum((decay[:, None] * (q.T @ clean_l)) ** 2))


def l2_term(k_ll: np.ndarray, noise_l: np.ndarray, eta: float, t: int) -> float:
    k_ll = _check_kernel(k_ll, noise_l)
    q, decay = contraction_factors(k_ll, eta, t)
    return float(np.sum(((1.0 - decay)[:, None] * (q.T @ noise_l)) ** 2))


@dataclass(frozen=True)
class BoundReport:
    l1: float
    l2: float
    kc: float
    kc_argmin_r0: int
    tau0_sq: float
    c0: float
    x: float
    m: int
    u: int
    t: int
    eta: float
    combined: float
    realized_test_mse: float
    m_over_n: float

    def to_json(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def combine(l1: float, l2: float, kc: float, m: int, u: int, c0: float, x: float) -> float:
    return (2.0 * c0 / m) * (l1 + l2) + c0 * kc + c0 * x / u


def evaluate_bound(h: np.ndarray, clean: np.ndarray, observed: np.ndarray, split: SplitSpec,
                   eta: float | None = None, t: int = 100, c0: float = 1.0,
                   x: float = 1.0) -> BoundReport:
    """Every bound component for embeddings ``h`` plus the realized test MSE.

    ``eta`` defaults to ``0.9 / lambda_1(H H^T)``.
    """
    h = np.asarray(h, dtype=np.float64)
    clean = np.asarray(clean, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if clean.shape != observed.shape or clean.shape[0] != h.shape[0]:
        raise ContractError("label matrices must match each other and the embedding rows")
    if split.num_nodes != h.shape[0]:
        raise ContractError("split must cover the embedding rows")
    if x <= 0:
        raise ConfigError("confidence parameter x must be positive")
    if c0 <= 0:
        raise ConfigError("c0 must be positive")

    spectrum = gram_spectrum(h)
    if eta is None:
        if spectrum[0] <= 0:
            raise ConfigError("embedding gram matrix is zero; no admissible step size")
        eta = 0.9 / spectrum[0]
    lab = split.labeled
    hl = h[lab]
    k_ll = gram(hl)
    noise = observed - clean

    l1 = l1_term(k_ll, clean[lab], eta, t)
    l2 = l2_term(k_ll, noise[lab], eta, t)
    kc, r0 = kernel_complexity(spectrum, split.m, split.u)
    tau0_sq = float(np.max(np.sum(h**2, axis=1)))

    traj = mse_gd_trajectory(h, NoisyLabels.from_observed(observed, clean), split, eta, t)
    realized = float(np.sum(traj.unlabeled[-1] ** 2)) / split.u

    return BoundReport(
        l1=l1, l2=l2, kc=kc, kc_argmin_r0=r0, tau0_sq=tau0_sq, c0=float(c0), x=float(x),
        m=split.m, u=split.u, t=int(t), eta=float(eta),
        combined=combine(l1, l2, kc, split.m, split.u, c0, x),
        realized_test_mse=realized, m_over_n=split.m / split.num_nodes,
    )
