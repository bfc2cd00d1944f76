"""Gram-matrix spectra: eigensolver, truncated nuclear norm, kernel complexity,
the low-rank attention transform and eigen-projection scores.

All gram matrices here are ``K = H @ H.T`` (N x N) for an embedding matrix
``H`` of shape (N, d).
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, ContractError, DegenerateEigengapWarning, DegenerateInputError


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues in descending order and matching orthonormal eigenvector columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        u = self.eigenvectors
        return (u * self.eigenvalues) @ u.T


def gram(h: np.ndarray) -> np.ndarray:
    h = np.asarray(h, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise ContractError("embedding matrix has non-finite entries")
    k = h @ h.T
    # h @ h.T can differ from its transpose in the last bit
    return 0.5 * (k + k.T)


def _fix_signs(u: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    # first component with |v_i| > tol made positive, per column
    mask = np.abs(u) > tol
    first = np.argmax(mask, axis=0)
    pivot = u[first, np.arange(u.shape[1])]
    signs = np.where(pivot < 0, -1.0, 1.0)
    return u * signs


def sym_eig(k: np.ndarray, *, symmetry_tol: float = 1e-10) -> SpectralDecomposition:
    """Dense symmetric eigendecomposition, descending, with a fixed sign convention."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {k.shape}")
    scale = max(1.0, float(np.max(np.abs(k)))) if k.size else 1.0
    if k.size and np.max(np.abs(k - k.T)) > symmetry_tol * scale:
        raise ContractError("matrix is not symmetric")
    w, u = scipy.linalg.eigh(0.5 * (k + k.T))
    w, u = w[::-1].copy(), u[:, ::-1]
    return SpectralDecomposition(w, _fix_signs(u))


def gram_spectrum(h: np.ndarray) -> np.ndarray:
    """Eigenvalues of ``H H^T`` (length N, descending).

    Uses the d x d co-gram ``H^T H`` when d < N and pads with zeros; the
    nonzero spectra of the two products coincide.
    """
    h = np.asarray(h, dtype=np.float64)
    n, d = h.shape
    if d >= n:
        return sym_eig(gram(h)).eigenvalues
    c = h.T @ h
    w = scipy.linalg.eigvalsh(0.5 * (c + c.T))[::-1]
    return np.concatenate([w, np.zeros(n - d)])


def _tail_sums(eigenvalues: np.ndarray) -> np.ndarray:
    """``out[r] = sum(eigenvalues[r:])`` for r = 0..len, last entry 0."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    return np.concatenate([np.cumsum(lam[::-1])[::-1], [0.0]])


def tnn(k: np.ndarray, r0: int) -> float:
    """Truncated nuclear norm of a symmetric PSD matrix: sum of eigenvalues past ``r0``."""
    k = np.asarray(k, dtype=np.float64)
    n = k.shape[0]
    if not 0 <= r0 <= n:
        raise ConfigError(f"r0 must lie in [0, {n}], got {r0}")
    lam = scipy.linalg.eigvalsh(0.5 * (k + k.T))[::-1]
    return float(lam[r0:].sum())


def tnn_embedding(h: np.ndarray, r0: int) -> float:
    """TNN of ``H H^T`` evaluated through the co-gram ``H^T H``."""
    h = np.asarray(h, dtype=np.float64)
    n, d = h.shape
    if not 0 <= r0 <= n:
        raise ConfigError(f"r0 must lie in [0, {n}], got {r0}")
    if r0 >= d:
        return 0.0
    c = h.T @ h
    lam = scipy.linalg.eigvalsh(0.5 * (c + c.T))[::-1]
    return float(lam[r0:].sum())


def tnn_gradient(h: np.ndarray, r0: int, *, gap_tol: float = 1e-8) -> np.ndarray:
    """Gradient of ``tnn_embedding(H, r0)`` with respect to ``H``.

    Equals ``2 (I - U_r U_r^T) H`` with ``U_r`` the top-``r0`` eigenvectors of
    ``H H^T``; computed as ``2 H (I - V_r V_r^T)`` with ``V_r`` the top
    eigenvectors of ``H^T H``. When the eigengap at ``r0`` is below
    ``gap_tol * (1 + lambda_1)`` the result is a subgradient and a
    :class:`DegenerateEigengapWarning` is emitted.
    """
    h = np.asarray(h, dtype=np.float64)
    n, d = h.shape
    if not 0 <= r0 <= n:
        raise ConfigError(f"r0 must lie in [0, {n}], got {r0}")
    if r0 == 0:
        return 2.0 * h
    if r0 >= d:
        return np.zeros_like(h)
    c = h.T @ h
    w, v = scipy.linalg.eigh(0.5 * (c + c.T))
    w, v = w[::-1], v[:, ::-1]
    if w[r0 - 1] - w[r0] < gap_tol * (1.0 + max(w[0], 0.0)):
        warnings.warn(
            f"eigengap at rank {r0} is {w[r0 - 1] - w[r0]:.3g}; returning a subgradient",
            DegenerateEigengapWarning,
            stacklevel=2,
        )
    vr = v[:, :r0]
    return 2.0 * (h - (h @ vr) @ vr.T)


def kc_profile(eigenvalues: np.ndarray, m: int, u: int) -> np.ndarray:
    """Kernel-complexity objective for every truncation rank r0 = 0..N.

    The square root magnifies round-off in near-zero eigenvalues, so pass
    :func:`gram_spectrum` output (exact structural zeros) where possible.
    """
    lam = np.asarray(eigenvalues, dtype=np.float64)
    tails = np.maximum(_tail_sums(lam), 0.0)
    r = np.arange(len(lam) + 1)
    return r * (1.0 / u + 1.0 / m) + np.sqrt(tails) * (1.0 / np.sqrt(u) + 1.0 / np.sqrt(m))


def kernel_complexity(eigenvalues: np.ndarray, m: int, u: int) -> tuple[float, int]:
    """Minimum of the KC objective over r0 in [0, N] and its smallest minimizer."""
    lam = np.asarray(eigenvalues, dtype=np.float64)
    if lam.size == 0:
        raise ConfigError("empty spectrum")
    if m < 1 or u < 1:
        raise ConfigError("m and u must be at least 1")
    profile = kc_profile(lam, m, u)
    r0 = int(np.argmin(profile))
    return float(profile[r0]), r0


@dataclass(frozen=True)
class AttentionTransform:
    """``B = K / lambda_1`` and the attended features ``F = B H``."""

    attention: np.ndarray
    features: np.ndarray
    top_eigenvalue: float


def lr_attention(h: np.ndarray) -> AttentionTransform:
    """Low-rank attention: gram(F) = K^3 / lambda_1^2, so each eigenvalue shrinks."""
    h = np.asarray(h, dtype=np.float64)
    k = gram(h)
    lam1 = float(gram_spectrum(h)[0])
    if lam1 <= 0.0:
        raise DegenerateInputError("LR-attention is undefined for a zero embedding matrix")
    b = k / lam1
    return AttentionTransform(b, b @ h, lam1)


def lr_attention_features(h: np.ndarray) -> np.ndarray:
    """``F = (H H^T / lambda_1) H`` computed as ``H (H^T H) / lambda_1`` in O(N d^2)."""
    h = np.asarray(h, dtype=np.float64)
    lam1 = float(gram_spectrum(h)[0])
    if lam1 <= 0.0:
        raise DegenerateInputError("LR-attention is undefined for a zero embedding matrix")
    return h @ (h.T @ h) / lam1


@dataclass(frozen=True)
class ProjectionReport:
    """Eigen-projection scores and their prefix sums (signal concentration)."""

    p: np.ndarray
    concentration: np.ndarray
    noise_p: np.ndarray | None = None
    noise_concentration: np.ndarray | None = None

    def concentration_at(self, r: int) -> float:
        return float(self.concentration[r - 1])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rank", "p", "signal_concentration", "noise_concentration"])
            for r in range(len(self.p)):
                noise = "" if self.noise_concentration is None else repr(float(self.noise_concentration[r]))
                w.writerow([r + 1, repr(float(self.p[r])), repr(float(self.concentration[r])), noise])


def _projection_scores(u: np.ndarray, cols: np.ndarray) -> np.ndarray:
    proj = (u.T @ cols) ** 2  # (N, C)
    return (proj / np.sum(cols**2, axis=0)).mean(axis=1)


def eigen_projection(decomposition: SpectralDecomposition, labels: np.ndarray,
                     noise: np.ndarray | None = None) -> ProjectionReport:
    """Class-averaged squared projections of label columns onto each eigenvector.

    Noise columns that are identically zero carry no direction and are left
    out of the noise average; if every column is zero no noise curve is
    reported.
    """
    u = decomposition.eigenvectors
    y = np.asarray(labels, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] != u.shape[0]:
        raise ContractError("label matrix must have one row per eigenvector entry")
    if np.any(np.sum(y**2, axis=0) == 0):
        raise ConfigError("every label column must be nonzero")
    p = _projection_scores(u, y)
    noise_p = noise_c = None
    if noise is not None:
        nz = np.asarray(noise, dtype=np.float64)
        if nz.shape != y.shape:
            raise ContractError("noise matrix must match the label matrix shape")
        keep = np.sum(nz**2, axis=0) > 0
        if keep.any():
            noise_p = _projection_scores(u, nz[:, keep])
            noise_c = np.cumsum(noise_p)
    return ProjectionReport(p, np.cumsum(p), noise_p, noise_c)


def projection_rank(num_nodes: int, embed_dim: int, fraction: float = 0.2) -> int:
    """Rank ``ceil(fraction * min(N, d))`` at which concentration is reported."""
    from .graph import ceil_count

    return max(1, ceil_count(fraction, min(num_nodes, embed_dim)))
