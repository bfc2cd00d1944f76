"""Attributed graphs: data model, bundle I/O, synthetic generation, splits and corruption.

A bundle directory holds four plain-text files::

    meta.json      {"num_nodes": N, "num_features": D, "num_classes": C}
    edges.csv      header "src,dst", one undirected edge per line with src < dst
    features.csv   N lines of D comma-separated decimals (no header)
    labels.csv     header "node,label", one line per node

plus an optional ``splits.json`` with ``{"labeled": [...], "unlabeled": [...]}``.
Floats are written with 17 significant digits so a save/load round trip is
bit-exact in binary64.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal

import numpy as np

from .errors import BundleFormatError, ConfigError, ContractError

NoiseKind = Literal["symmetric", "asymmetric"]

_FLOAT_FMT = ".17g"


def ceil_count(ratio: float, n: int) -> int:
    """``ceil(ratio * n)`` without float round-up (0.1 * 30 must give 3, not 4)."""
    return int(math.ceil(round(ratio * n, 9)))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _canonical_edges(edges, num_nodes: int) -> np.ndarray:
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.size and (e.min() < 0 or e.max() >= num_nodes):
        raise ContractError("edge endpoint out of range [0, N)")
    if np.any(e[:, 0] == e[:, 1]):
        raise ContractError("self-loops are not stored in the edge set")
    e = np.sort(e, axis=1)
    e = e[np.lexsort((e[:, 1], e[:, 0]))]
    if len(e) > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
        raise ContractError("duplicate undirected edge")
    return e


@dataclass(frozen=True)
class SplitSpec:
    """Labeled / unlabeled partition of ``range(num_nodes)``."""

    labeled: np.ndarray
    unlabeled: np.ndarray

    def __post_init__(self):
        lab = np.sort(np.asarray(self.labeled, dtype=np.int64))
        unl = np.sort(np.asarray(self.unlabeled, dtype=np.int64))
        both = np.concatenate([lab, unl])
        if len(np.unique(both)) != len(both) or (
            len(both) and (both.min() != 0 or both.max() != len(both) - 1)
        ):
            raise ContractError("labeled and unlabeled sets must partition [0, N)")
        object.__setattr__(self, "labeled", _frozen(lab))
        object.__setattr__(self, "unlabeled", _frozen(unl))

    @property
    def m(self) -> int:
        return len(self.labeled)

    @property
    def u(self) -> int:
        return len(self.unlabeled)

    @property
    def num_nodes(self) -> int:
        return self.m + self.u

    def to_json(self) -> dict:
        return {"labeled": self.labeled.tolist(), "unlabeled": self.unlabeled.tolist()}


@dataclass(frozen=True)
class GraphBundle:
    """An undirected attributed graph with clean one-hot labels."""

    num_nodes: int
    num_features: int
    num_classes: int
    edges: np.ndarray
    features: np.ndarray
    clean_labels: np.ndarray
    split: SplitSpec | None = field(default=None, compare=False)

    def __post_init__(self):
        n, d, c = self.num_nodes, self.num_features, self.num_classes
        if n < 1:
            raise ConfigError("a bundle needs at least one node")
        if d < 1 or c < 1:
            raise ConfigError("num_features and num_classes must be positive")
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.clean_labels, dtype=np.float64)
        if x.shape != (n, d):
            raise ContractError(f"features shape {x.shape} != ({n}, {d})")
        if y.shape != (n, c):
            raise ContractError(f"clean_labels shape {y.shape} != ({n}, {c})")
        if not np.all((y == 0) | (y == 1)) or not np.all(y.sum(axis=1) == 1):
            raise ContractError("each clean label row must be one-hot")
        if self.split is not None and self.split.num_nodes != n:
            raise ContractError("split does not cover the bundle's nodes")
        object.__setattr__(self, "edges", _frozen(_canonical_edges(self.edges, n)))
        object.__setattr__(self, "features", _frozen(x))
        object.__setattr__(self, "clean_labels", _frozen(y))

    @property
    def labels(self) -> np.ndarray:
        """Clean class index per node."""
        return np.argmax(self.clean_labels, axis=1)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric 0/1 adjacency without self-loops."""
        a = np.zeros((self.num_nodes, self.num_nodes))
        if self.num_edges:
            a[self.edges[:, 0], self.edges[:, 1]] = 1.0
            a[self.edges[:, 1], self.edges[:, 0]] = 1.0
        return a

    def replace(self, **changes) -> "GraphBundle":
        kw = dict(
            num_nodes=self.num_nodes,
            num_features=self.num_features,
            num_classes=self.num_classes,
            edges=self.edges,
            features=self.features,
            clean_labels=self.clean_labels,
            split=self.split,
        )
        kw.update(changes)
        return GraphBundle(**kw)


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((len(labels), num_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


# --------------------------------------------------------------------------- I/O


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise BundleFormatError(path.name, "missing file")
    return path.read_text(encoding="utf-8").splitlines()


def _parse_int(text: str, fname: str, lineno: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise BundleFormatError(fname, f"expected an integer, got {text!r}", lineno) from None


def load_bundle(path) -> GraphBundle:
    """Read and validate a bundle directory."""
    root = Path(path)
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise BundleFormatError("meta.json", "missing file")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        n, d, c = (int(meta[k]) for k in ("num_nodes", "num_features", "num_classes"))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise BundleFormatError("meta.json", f"malformed metadata: {exc}") from None
    if n < 1 or d < 1 or c < 1:
        raise BundleFormatError("meta.json", "counts must be positive")

    lines = _read_lines(root / "edges.csv")
    if not lines or lines[0].strip() != "src,dst":
        raise BundleFormatError("edges.csv", "expected header 'src,dst'", 1)
    edges, seen = [], set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise BundleFormatError("edges.csv", "expected two columns", lineno)
        s, t = (_parse_int(p, "edges.csv", lineno) for p in parts)
        if not (0 <= s < n and 0 <= t < n):
            raise BundleFormatError("edges.csv", "node index out of range", lineno)
        if s == t:
            raise BundleFormatError("edges.csv", "self-loop", lineno)
        key = (min(s, t), max(s, t))
        if key in seen:
            raise BundleFormatError("edges.csv", "duplicate edge", lineno)
        seen.add(key)
        edges.append(key)

    lines = [ln for ln in _read_lines(root / "features.csv")]
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) != n:
        raise BundleFormatError("features.csv", f"expected {n} rows, found {len(lines)}")
    x = np.empty((n, d))
    for lineno, line in enumerate(lines, start=1):
        parts = line.split(",")
        if len(parts) != d:
            raise BundleFormatError("features.csv", f"expected {d} values, found {len(parts)}", lineno)
        try:
            x[lineno - 1] = [float(p) for p in parts]
        except ValueError:
            raise BundleFormatError("features.csv", "malformed decimal", lineno) from None
        if not np.all(np.isfinite(x[lineno - 1])):
            raise BundleFormatError("features.csv", "non-finite value", lineno)

    lines = _read_lines(root / "labels.csv")
    if not lines or lines[0].strip() != "node,label":
        raise BundleFormatError("labels.csv", "expected header 'node,label'", 1)
    labels = np.full(n, -1, dtype=np.int64)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise BundleFormatError("labels.csv", "expected two columns", lineno)
        node, label = (_parse_int(p, "labels.csv", lineno) for p in parts)
        if not 0 <= node < n:
            raise BundleFormatError("labels.csv", "node index out of range", lineno)
        if not 0 <= label < c:
            raise BundleFormatError("labels.csv", "class index out of range", lineno)
        if labels[node] != -1:
            raise BundleFormatError("labels.csv", f"node {node} labeled twice", lineno)
        labels[node] = label
    missing = np.flatnonzero(labels < 0)
    if len(missing):
        raise BundleFormatError("labels.csv", f"node {missing[0]} has no label")

    split = None
    split_path = root / "splits.json"
    if split_path.is_file():
        try:
            raw = json.loads(split_path.read_text(encoding="utf-8"))
            split = SplitSpec(raw["labeled"], raw["unlabeled"])
        except (json.JSONDecodeError, KeyError, TypeError, ContractError) as exc:
            raise BundleFormatError("splits.json", f"invalid split: {exc}") from None
        if split.num_nodes != n:
            raise BundleFormatError("splits.json", "split does not cover all nodes")

    return GraphBundle(n, d, c, np.array(edges, dtype=np.int64).reshape(-1, 2), x, one_hot(labels, c), split)


def _write_text(path: Path, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def format_float(v: float) -> str:
    return format(float(v), _FLOAT_FMT)


def save_bundle(bundle: GraphBundle, path) -> None:
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create bundle directory {root}: {exc}") from exc
    meta = {"num_nodes": bundle.num_nodes, "num_features": bundle.num_features,
            "num_classes": bundle.num_classes}
    _write_text(root / "meta.json", json.dumps(meta) + "\n")
    _write_text(root / "edges.csv", "src,dst\n" + "".join(f"{s},{t}\n" for s, t in bundle.edges))
    _write_text(
        root / "features.csv",
        "".join(",".join(format_float(v) for v in row) + "\n" for row in bundle.features),
    )
    _write_text(
        root / "labels.csv",
        "node,label\n" + "".join(f"{i},{c}\n" for i, c in enumerate(bundle.labels)),
    )
    if bundle.split is not None:
        _write_text(root / "splits.json", json.dumps(bundle.split.to_json()) + "\n")


def write_label_csv(path, labels: Iterable[int]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "label"])
        w.writerows(enumerate(int(c) for c in labels))


def read_label_csv(path, num_nodes: int, num_classes: int) -> np.ndarray:
    """Read a ``node,label`` file into a one-hot matrix."""
    fname = Path(path).name
    lines = _read_lines(Path(path))
    labels = np.full(num_nodes, -1, dtype=np.int64)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        node, label = (_parse_int(p, fname, lineno) for p in line.split(","))
        if not 0 <= node < num_nodes:
            raise BundleFormatError(fname, "node index out of range", lineno)
        if not 0 <= label < num_classes:
            raise BundleFormatError(fname, "class index out of range", lineno)
        labels[node] = label
    if np.any(labels < 0):
        raise BundleFormatError(fname, "not every node has a label")
    return one_hot(labels, num_classes)


# ------------------------------------------------------------------- adjacency


@dataclass(frozen=True)
class NormalizedAdjacency:
    """``D^{-1/2} (A + I) D^{-1/2}`` as a dense symmetric matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))


def normalize_edges(num_nodes: int, edges: np.ndarray) -> NormalizedAdjacency:
    a = np.eye(num_nodes)
    if len(edges):
        a[edges[:, 0], edges[:, 1]] = 1.0
        a[edges[:, 1], edges[:, 0]] = 1.0
    inv_sqrt = 1.0 / np.sqrt(a.sum(axis=1))
    return NormalizedAdjacency(inv_sqrt[:, None] * a * inv_sqrt[None, :])


def normalize_adjacency(bundle: GraphBundle) -> NormalizedAdjacency:
    return normalize_edges(bundle.num_nodes, bundle.edges)


# --------------------------------------------------------------- generation


def generate_sbm(
    blocks: int,
    per_block: int,
    p_in: float,
    p_out: float,
    feature_dim: int,
    feature_shift: float,
    seed: int,
) -> GraphBundle:
    """Stochastic block model with class-mean Gaussian features.

    Nodes are ordered block by block and labeled by block. Node ``i`` in
    block ``k`` gets features ``feature_shift * e_k + N(0, I)``, so class
    means sit on orthogonal axes.
    """
    for name, p in (("p_in", p_in), ("p_out", p_out)):
        if not 0.0 <= p <= 1.0:
            raise ConfigError(f"{name} must lie in [0, 1], got {p}")
    if blocks < 1 or per_block < 1:
        raise ConfigError("blocks and per_block must be positive")
    if feature_dim < blocks:
        raise ConfigError("feature_dim must be at least the number of blocks")
    rng = np.random.default_rng(seed)
    n = blocks * per_block
    block = np.repeat(np.arange(blocks), per_block)
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(block[iu] == block[ju], p_in, p_out)
    keep = rng.random(len(iu)) < prob
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    x = rng.standard_normal((n, feature_dim))
    x[np.arange(n), block] += feature_shift
    return GraphBundle(n, feature_dim, blocks, edges, x, one_hot(block, blocks))


def sample_split(num_nodes: int, m: int, seed: int) -> SplitSpec:
    """Draw ``m`` labeled nodes uniformly without replacement."""
    if not 1 <= m < num_nodes:
        raise ConfigError(f"need 1 <= m < N, got m={m}, N={num_nodes}")
    perm = np.random.default_rng(seed).permutation(num_nodes)
    return SplitSpec(perm[:m], perm[m:])


# ------------------------------------------------------------------- noise


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic ``T[i, j] = P(observed = j | clean = i)``."""

    matrix: np.ndarray
    kind: str
    rate: float

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(self.matrix))

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]


def build_transition_matrix(kind: NoiseKind, rate: float, num_classes: int) -> TransitionMatrix:
    """Symmetric (uniform off-diagonal) or asymmetric (pairwise ``c -> c+1``) noise."""
    if num_classes < 2:
        raise ConfigError("label noise needs at least two classes")
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"noise rate must lie in [0, 1], got {rate}")
    c = num_classes
    if kind == "symmetric":
        t = np.full((c, c), rate / (c - 1))
    elif kind == "asymmetric":
        t = np.zeros((c, c))
        t[np.arange(c), (np.arange(c) + 1) % c] = rate
    else:
        raise ConfigError(f"unknown noise kind {kind!r}")
    np.fill_diagonal(t, 1.0 - rate)
    return TransitionMatrix(t, kind, float(rate))


@dataclass(frozen=True)
class NoisyLabels:
    """Observed one-hot labels and the noise ``observed - clean``."""

    observed: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=np.float64)
        noise = np.asarray(self.noise, dtype=np.float64)
        if obs.ndim != 2 or obs.shape != noise.shape:
            raise ContractError("observed labels and noise must be matching (N, C) matrices")
        if not (np.all((obs == 0) | (obs == 1)) and np.all(obs.sum(axis=1) == 1)):
            raise ContractError("observed labels must be one-hot rows")
        object.__setattr__(self, "observed", _frozen(obs))
        object.__setattr__(self, "noise", _frozen(noise))

    @property
    def clean(self) -> np.ndarray:
        return self.observed - self.noise

    @classmethod
    def from_observed(cls, observed: np.ndarray, clean: np.ndarray) -> "NoisyLabels":
        observed = np.asarray(observed, dtype=np.float64)
        return cls(observed, observed - np.asarray(clean, dtype=np.float64))


def inject_label_noise(clean: np.ndarray, transition: TransitionMatrix, seed: int,
                       indices=None) -> NoisyLabels:
    """Resample each node's class from ``T[clean class]``.

    Only rows in ``indices`` are touched when it is given (default: all rows).
    """
    clean = np.asarray(clean, dtype=np.float64)
    n, c = clean.shape
    if transition.num_classes != c:
        raise ContractError("transition matrix size does not match label width")
    y = np.argmax(clean, axis=1)
    rows = np.arange(n) if indices is None else np.asarray(indices, dtype=np.int64)
    draws = np.random.default_rng(seed).random(len(rows))
    t = transition.matrix
    cum = np.cumsum(t, axis=1)
    new = y.copy()
    for r, u in zip(rows, draws):
        row = t[y[r]]
        k = int(np.searchsorted(cum[y[r]], u, side="right"))
        if k >= c or row[k] == 0.0:
            k = int(np.flatnonzero(row > 0)[-1])
        new[r] = k
    return NoisyLabels.from_observed(one_hot(new, c), clean)


def inject_attribute_noise(features: np.ndarray, ratio: float, seed: int, rows=None) -> np.ndarray:
    """Shuffle ``ceil(ratio * D)`` randomly chosen coordinates within each node's row."""
    if not 0.0 <= ratio <= 1.0:
        raise ConfigError(f"attribute noise ratio must lie in [0, 1], got {ratio}")
    x = np.array(features, dtype=np.float64, copy=True)
    n, d = x.shape
    k = ceil_count(ratio, d)
    if k == 0:
        return x
    rng = np.random.default_rng(seed)
    for i in (range(n) if rows is None else np.asarray(rows, dtype=np.int64)):
        idx = rng.choice(d, size=k, replace=False)
        x[i, idx] = x[i, idx[rng.permutation(k)]]
    return x
