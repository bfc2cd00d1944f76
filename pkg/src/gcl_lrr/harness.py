"""Experiment orchestration: data preparation, corruption, encoder variants,
classification, bound diagnostics and hyperparameter cross-validation.

Variants
--------
``gcn-only``
    The GCN encoder at its initialization, without contrastive training.
``gcl-no-tnn``
    Contrastive training with the low-rank term switched off.
``gcl-lrr``
    Contrastive training with the truncated nuclear norm term.
``gcl-lr-attention``
    ``gcl-lrr`` embeddings passed through the low-rank attention layer.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .bound import evaluate_bound
from .classifier import accuracy, kl_loss, predict_labels, top_eigenvalue, train_transductive
from .encoder import EncoderParams, TrainConfig, gcn_forward, init_params, train_encoder
from .errors import ConfigError, GclLrrError
from .graph import (
    GraphBundle,
    NoisyLabels,
    SplitSpec,
    build_transition_matrix,
    ceil_count,
    generate_sbm,
    inject_attribute_noise,
    inject_label_noise,
    load_bundle,
    normalize_adjacency,
    sample_split,
)
from .seeding import derive_seed
from .spectral import eigen_projection, gram, lr_attention_features, projection_rank, sym_eig

log = logging.getLogger(__name__)

VARIANTS = ("gcn-only", "gcl-no-tnn", "gcl-lrr", "gcl-lr-attention")

# sub-stream tags for derive_seed(run_seed, tag)
_SBM, _SPLIT, _VALIDATION, _LABEL_NOISE, _ATTR_NOISE, _ENCODER, _FOLDS = range(10, 17)


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {"sbm": dict(SBM_DEFAULTS)})
    noise: dict = field(default_factory=lambda: {"kind": "symmetric", "rate": 0.4,
                                                 "attribute_ratio": 0.0})
    split: dict = field(default_factory=lambda: {"labeled_fraction": 0.2})
    encoder: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=lambda: {"epochs": 5000, "eta_scale": 0.9,
                                                      "validation_fraction": 0.2})
    variants: tuple = ("gcl-lrr",)
    bound: dict = field(default_factory=lambda: {"c0": 1.0, "x": 1.0, "t": 100})
    seeds: tuple = (0,)
    projection: bool = True
    output_dir: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.variants:
            raise ConfigError("at least one variant is required")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad:
            raise ConfigError(f"unknown variants {bad}; choose from {list(VARIANTS)}")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if ("sbm" in self.dataset) == ("bundle" in self.dataset):
            raise ConfigError("dataset must name exactly one of 'sbm' or 'bundle'")
        if self.noise.get("kind", "symmetric") not in ("symmetric", "asymmetric"):
            raise ConfigError(f"unknown noise kind {self.noise.get('kind')!r}")
        for key in ("rate", "attribute_ratio"):
            v = float(self.noise.get(key, 0.0))
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"noise {key} must lie in [0, 1], got {v}")
        self.train_config(0)  # validates encoder keys

    # ---- derived pieces

    def train_config(self, run_seed: int, **overrides) -> TrainConfig:
        raw = {k: v for k, v in self.encoder.items() if k != "seed"}
        raw.update(overrides)
        return TrainConfig.from_mapping({**raw, "seed": derive_seed(run_seed, _ENCODER)})

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset, "noise": self.noise, "split": self.split,
            "encoder": self.encoder, "classifier": self.classifier,
            "variants": list(self.variants), "bound": self.bound, "seeds": list(self.seeds),
            "projection": self.projection, "output_dir": self.output_dir,
        }

    def config_hash(self) -> str:
        """SHA-256 over the canonical JSON of every field except ``output_dir``."""
        body = self.to_json()
        body.pop("output_dir")
        text = json.dumps(body, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    @classmethod
    def from_mapping(cls, raw: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        return cls(**raw)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_mapping(raw)


SBM_DEFAULTS = {"blocks": 3, "per_block": 100, "p_in": 0.1, "p_out": 0.01,
                "feature_dim": 16, "feature_shift": 1.0}


@dataclass(frozen=True)
class PreparedData:
    """One seed's corrupted dataset; ``bundle.features`` already carries attribute noise."""

    bundle: GraphBundle
    clean_features: np.ndarray
    split: SplitSpec
    validation: np.ndarray
    labels: NoisyLabels


def prepare_data(config: ExperimentConfig, run_seed: int) -> PreparedData:
    """Build the graph, split it and corrupt labeled rows only."""
    if "sbm" in config.dataset:
        params = {**SBM_DEFAULTS, **config.dataset["sbm"]}
        bundle = generate_sbm(seed=derive_seed(run_seed, _SBM), **params)
    else:
        bundle = load_bundle(config.dataset["bundle"])

    n = bundle.num_nodes
    if bundle.split is not None and "sbm" not in config.dataset:
        split = bundle.split
    elif "bundle" in config.dataset:
        raise ConfigError("real-data bundles need an explicit splits.json")
    else:
        if "m" in config.split:
            m = int(config.split["m"])
        else:
            m = ceil_count(float(config.split.get("labeled_fraction", 0.2)), n)
        split = sample_split(n, m, derive_seed(run_seed, _SPLIT))

    vfrac = float(config.classifier.get("validation_fraction", 0.2))
    k = ceil_count(vfrac, split.m) if vfrac > 0 else 0
    if k >= split.m:
        raise ConfigError("validation fraction leaves no labeled training nodes")
    vrng = np.random.default_rng(derive_seed(run_seed, _VALIDATION))
    validation = np.sort(vrng.choice(split.labeled, size=k, replace=False)) if k else np.array([], dtype=np.int64)

    transition = build_transition_matrix(config.noise.get("kind", "symmetric"),
                                         float(config.noise.get("rate", 0.0)), bundle.num_classes)
    labels = inject_label_noise(bundle.clean_labels, transition,
                                derive_seed(run_seed, _LABEL_NOISE), indices=split.labeled)
    features = inject_attribute_noise(bundle.features, float(config.noise.get("attribute_ratio", 0.0)),
                                      derive_seed(run_seed, _ATTR_NOISE), rows=split.labeled)
    return PreparedData(bundle.replace(features=features, split=split), np.asarray(bundle.features),
                        split, validation, labels)


def encoder_for_variant(variant: str, data: PreparedData, config: ExperimentConfig, run_seed: int,
                        cache: dict) -> tuple[EncoderParams, float | None]:
    """Trained (or initial) encoder weights for ``variant`` and its final training loss."""
    if variant == "gcn-only":
        tc = config.train_config(run_seed)
        return init_params(data.bundle.num_features, tc.hidden_width, tc.embed_width,
                           derive_seed(tc.seed, 0)), None
    key = "no-tnn" if variant == "gcl-no-tnn" else "lrr"
    if key not in cache:
        tc = config.train_config(run_seed, **({"tnn_weight": 0.0} if key == "no-tnn" else {}))
        params, trace = train_encoder(data.bundle, tc)
        cache[key] = (params, trace[-1].total if trace else None)
    return cache[key]


def embed(params: EncoderParams, bundle: GraphBundle, attention: bool = False) -> np.ndarray:
    h = gcn_forward(params, bundle.features, normalize_adjacency(bundle))
    return lr_attention_features(h) if attention else h


def _concentration(h: np.ndarray, labels: NoisyLabels, clean: np.ndarray) -> dict:
    r = projection_rank(h.shape[0], h.shape[1])
    rep = eigen_projection(sym_eig(gram(h)), clean, labels.noise)
    return {
        "rank": r,
        "clean": rep.concentration_at(r),
        "noise": None if rep.noise_concentration is None else float(rep.noise_concentration[r - 1]),
    }


def run_cell(config: ExperimentConfig, data: PreparedData, variant: str, run_seed: int,
             cache: dict) -> dict:
    record: dict[str, Any] = {"config_hash": config.config_hash(), "seed": run_seed,
                              "variant": variant, "error": None}
    try:
        params, enc_loss = encoder_for_variant(variant, data, config, run_seed, cache)
        z = embed(params, data.bundle, attention=variant == "gcl-lr-attention")
        if top_eigenvalue(z) <= 0:
            raise ConfigError("embeddings collapsed to zero")
        eta = float(config.classifier.get("eta_scale", 0.9)) / top_eigenvalue(z)
        fit_split = data.split
        if len(data.validation):
            fit_rows = np.setdiff1d(data.split.labeled, data.validation)
            fit_split = SplitSpec(fit_rows, np.setdiff1d(np.arange(len(z)), fit_rows))
        state, probs = train_transductive(z, data.labels, fit_split, eta,
                                          int(config.classifier.get("epochs", 5000)))
        clean = np.asarray(data.bundle.clean_labels)
        test = data.split.unlabeled
        record["accuracy"] = accuracy(predict_labels(probs, test), clean, test)
        record["classifier_epochs"] = state.iterations_done
        record["validation_loss"] = (kl_loss(z, state.weights, np.asarray(data.labels.observed),
                                             data.validation)[0] if len(data.validation) else None)
        record["encoder_loss"] = enc_loss
        b = config.bound
        record["bound"] = evaluate_bound(z, clean, data.labels.observed, data.split, eta,
                                         int(b.get("t", 100)), float(b.get("c0", 1.0)),
                                         float(b.get("x", 1.0))).to_json()
        record["kc"] = record["bound"]["kc"]
        if config.projection:
            record["concentration"] = _concentration(z, data.labels, clean)
    except (GclLrrError, np.linalg.LinAlgError) as exc:
        log.warning("seed %s variant %s failed: %s", run_seed, variant, exc)
        record["error"] = f"{type(exc).__name__}: {exc}"
    return record


RECORD_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["config_hash", "seed", "variant", "error"],
    "properties": {
        "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "seed": {"type": "integer"},
        "variant": {"enum": list(VARIANTS)},
        "error": {"type": ["string", "null"]},
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "classifier_epochs": {"type": "integer", "minimum": 0},
        "encoder_loss": {"type": ["number", "null"]},
        "validation_loss": {"type": ["number", "null"]},
        "kc": {"type": "number", "minimum": 0},
        "bound": {
            "type": "object",
            "required": ["l1", "l2", "kc", "kc_argmin_r0", "tau0_sq", "c0", "x", "m", "u",
                         "t", "eta", "combined", "realized_test_mse", "m_over_n"],
            "properties": {
                "l1": {"type": "number", "minimum": 0},
                "l2": {"type": "number", "minimum": 0},
                "kc": {"type": "number", "minimum": 0},
                "kc_argmin_r0": {"type": "integer", "minimum": 0},
                "tau0_sq": {"type": "number", "minimum": 0},
                "c0": {"type": "number", "exclusiveMinimum": 0},
                "x": {"type": "number", "exclusiveMinimum": 0},
                "m": {"type": "integer", "minimum": 1},
                "u": {"type": "integer", "minimum": 1},
                "t": {"type": "integer", "minimum": 0},
                "eta": {"type": "number", "exclusiveMinimum": 0},
                "combined": {"type": "number", "minimum": 0},
                "realized_test_mse": {"type": "number", "minimum": 0},
                "m_over_n": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "concentration": {
            "type": "object",
            "required": ["rank", "clean", "noise"],
            "properties": {
                "rank": {"type": "integer", "minimum": 1},
                "clean": {"type": "number"},
                "noise": {"type": ["number", "null"]},
            },
        },
    },
    "if": {"properties": {"error": {"type": "null"}}},
    "then": {"required": ["accuracy", "bound", "kc"]},
}


def run_experiment(config: ExperimentConfig, out_dir=None) -> list[dict]:
    """Run every (seed, variant) cell; write ``records.jsonl`` when an output directory is set."""
    records = []
    for run_seed in config.seeds:
        try:
            data = prepare_data(config, run_seed)
        except GclLrrError as exc:
            for variant in config.variants:
                records.append({"config_hash": config.config_hash(), "seed": run_seed,
                                "variant": variant, "error": f"{type(exc).__name__}: {exc}"})
            continue
        cache: dict = {}
        for variant in config.variants:
            records.append(run_cell(config, data, variant, run_seed, cache))
    out = out_dir or config.output_dir
    if out is not None:
        write_records(Path(out) / "records.jsonl", records)
    return records


def write_records(path: Path, records: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def emit_projection_csv(h: np.ndarray, clean: np.ndarray, noise: np.ndarray | None, path) -> None:
    """Write eigen-projection and concentration curves for clean labels and noise."""
    eigen_projection(sym_eig(gram(h)), clean, noise).to_csv(path)


# ------------------------------------------------------------- cross-validation


@dataclass(frozen=True)
class CVResult:
    best_gamma: float
    best_tau: float
    table: list  # dicts with gamma, tau, fold, loss

    def to_json(self) -> dict:
        # infinite losses (invalid cells) become null so the output stays strict JSON
        table = [{**row, "loss": row["loss"] if np.isfinite(row["loss"]) else None} for row in self.table]
        return {"best_gamma": self.best_gamma, "best_tau": self.best_tau, "table": table}


GAMMA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
TAU_GRID = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5)


def fold_assignment(labeled: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    if folds < 2:
        raise ConfigError("cross-validation needs at least two folds")
    if folds > len(labeled):
        raise ConfigError(f"{folds} folds exceed the {len(labeled)} labeled nodes")
    perm = np.random.default_rng(seed).permutation(np.asarray(labeled))
    return [np.sort(f) for f in np.array_split(perm, folds)]


def cross_validate(config: ExperimentConfig, gamma_grid=GAMMA_GRID, tau_grid=TAU_GRID,
                   folds: int = 5, seed: int | None = None) -> CVResult:
    """Pick ``(rank_ratio, tnn_weight)`` minimizing mean held-out KL on the labeled set.

    The encoder is unsupervised, so it is trained once per grid cell; only the
    classifier is refit per fold. Ties go to the smaller ratio, then the
    smaller weight. Cells whose rank ratio is invalid for the embedding width
    score ``inf``.
    """
    gammas = sorted(float(g) for g in gamma_grid)
    taus = sorted(float(t) for t in tau_grid)
    if not gammas or not taus:
        raise ConfigError("grids must be nonempty")
    run_seed = config.seeds[0] if seed is None else int(seed)
    data = prepare_data(config, run_seed)
    parts = fold_assignment(data.split.labeled, folds, derive_seed(run_seed, _FOLDS))
    n = data.bundle.num_nodes
    epochs = int(config.classifier.get("epochs", 5000))
    scale = float(config.classifier.get("eta_scale", 0.9))
    y = np.asarray(data.labels.observed)

    table, best = [], (np.inf, None, None)
    for gamma in gammas:
        for tau in taus:
            try:
                tc = config.train_config(run_seed, rank_ratio=gamma, tnn_weight=tau)
                params, _ = train_encoder(data.bundle, tc)
                h = embed(params, data.bundle)
                eta = scale / top_eigenvalue(h)
            except GclLrrError as exc:
                log.info("grid cell gamma=%s tau=%s skipped: %s", gamma, tau, exc)
                h = None
            losses = []
            for i, held in enumerate(parts):
                if h is None:
                    loss = float("inf")
                else:
                    train_rows = np.setdiff1d(data.split.labeled, held)
                    fold_split = SplitSpec(train_rows, np.setdiff1d(np.arange(n), train_rows))
                    state, _ = train_transductive(h, data.labels, fold_split, eta, epochs)
                    loss = kl_loss(h, state.weights, y, held)[0]
                losses.append(loss)
                table.append({"gamma": gamma, "tau": tau, "fold": i, "loss": loss})
            mean = float(np.mean(losses))
            if mean < best[0]:
                best = (mean, gamma, tau)
    if best[1] is None:
        raise ConfigError("no grid cell produced a finite validation loss")
    return CVResult(best[1], best[2], table)


def summarize(records: list[dict]) -> dict:
    """Per-variant means of accuracy and bound components over successful runs."""
    out = {}
    for variant in VARIANTS:
        rows = [r for r in records if r["variant"] == variant and r["error"] is None]
        if not rows:
            continue
        out[variant] = {
            "runs": len(rows),
            "accuracy": float(np.mean([r["accuracy"] for r in rows])),
            "kc": float(np.mean([r["kc"] for r in rows])),
            "l1": float(np.mean([r["bound"]["l1"] for r in rows])),
            "l2": float(np.mean([r["bound"]["l2"] for r in rows])),
            "combined": float(np.mean([r["bound"]["combined"] for r in rows])),
        }
    return out


__all__ = ["ExperimentConfig", "PreparedData", "CVResult", "VARIANTS", "RECORD_SCHEMA",
           "prepare_data", "run_experiment", "run_cell", "cross_validate", "emit_projection_csv",
           "fold_assignment", "summarize", "embed"]
