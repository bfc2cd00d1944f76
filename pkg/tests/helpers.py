"""Independent oracles used across the test modules."""

import numpy as np

from gcl_lrr.graph import GraphBundle, one_hot

FD_STEP = 1e-5
FD_RTOL = 1e-4


def central_diff(f, x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        fp = f(x)
        x[idx] = orig - step
        fm = f(x)
        x[idx] = orig
        g[idx] = (fp - fm) / (2 * step)
    return g


def rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(np.asarray(analytic) - np.asarray(numeric))
    den = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
    return float(num / den)


def kc_enumerate(eigenvalues, m, u):
    """Brute-force kernel complexity: loop over every r0 with an explicit tail sum."""
    lam = [float(v) for v in eigenvalues]
    best, arg = None, None
    for r0 in range(len(lam) + 1):
        tail = max(sum(lam[r0:]), 0.0)
        val = r0 * (1 / u + 1 / m) + np.sqrt(tail) * (1 / np.sqrt(u) + 1 / np.sqrt(m))
        if best is None or val < best - 1e-15:
            best, arg = val, r0
    return best, arg


def random_bundle(rng: np.random.Generator, n: int, d: int, c: int, p: float = 0.3) -> GraphBundle:
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(len(iu)) < p
    labels = np.arange(n) % c
    return GraphBundle(n, d, c, np.stack([iu[keep], ju[keep]], 1), rng.standard_normal((n, d)),
                       one_hot(labels, c))


def kink_margin(params, x, adj) -> float:
    """Smallest |preactivation| of either ReLU layer; FD checks need it away from 0."""
    z0 = adj @ x @ params.w0
    z1 = adj @ np.maximum(z0, 0.0) @ params.w1
    return float(min(np.abs(z0).min(), np.abs(z1).min()))


def naive_gcn(w0, w1, x, adj):
    """Straight-line re-evaluation of the two-layer encoder with explicit loops."""
    n = len(x)
    hidden = np.zeros((n, w0.shape[1]))
    for i in range(n):
        for j in range(w0.shape[1]):
            s = 0.0
            for k in range(n):
                s += adj[i, k] * sum(x[k, f] * w0[f, j] for f in range(x.shape[1]))
            hidden[i, j] = max(s, 0.0)
    out = np.zeros((n, w1.shape[1]))
    for i in range(n):
        for j in range(w1.shape[1]):
            s = 0.0
            for k in range(n):
                s += adj[i, k] * sum(hidden[k, f] * w1[f, j] for f in range(w0.shape[1]))
            out[i, j] = max(s, 0.0)
    return out
