"""Command-line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .bound import evaluate_bound
from .classifier import accuracy, default_step_size, predict_labels, train_transductive, write_predictions
from .encoder import EncoderParams, TrainConfig, train_encoder, write_loss_trace
from .errors import (
    BundleFormatError,
    ConfigError,
    ContractError,
    DegenerateInputError,
    NumericalError,
)
from .graph import (
    NoisyLabels,
    build_transition_matrix,
    ceil_count,
    format_float,
    generate_sbm,
    inject_attribute_noise,
    inject_label_noise,
    load_bundle,
    read_label_csv,
    sample_split,
    save_bundle,
    write_label_csv,
)
from .seeding import derive_seed

log = logging.getLogger("gcl_lrr")

OBSERVED_FILE = "observed_labels.csv"


def _write_matrix(path, mat: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in mat:
            fh.write(",".join(format_float(v) for v in row) + "\n")


def _read_matrix(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            raise BundleFormatError(Path(path).name, "malformed decimal", lineno) from None
    if not rows or len({len(r) for r in rows}) != 1:
        raise BundleFormatError(Path(path).name, "expected a non-empty rectangular matrix")
    return np.array(rows)


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _labels_for(bundle, bundle_dir: Path, observed: str | None) -> NoisyLabels:
    path = Path(observed) if observed else bundle_dir / OBSERVED_FILE
    if path.is_file():
        obs = read_label_csv(path, bundle.num_nodes, bundle.num_classes)
    elif observed:
        raise ConfigError(f"observed label file {path} not found")
    else:
        obs = np.asarray(bundle.clean_labels)
    return NoisyLabels.from_observed(obs, bundle.clean_labels)


def _split_for(bundle, seed: int, labeled_fraction: float | None):
    if bundle.split is not None:
        return bundle.split
    if labeled_fraction is None:
        raise ConfigError("bundle has no splits.json; pass --labeled-fraction")
    return sample_split(bundle.num_nodes, ceil_count(labeled_fraction, bundle.num_nodes), seed)


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> None:
    bundle = generate_sbm(args.blocks, args.per_block, args.p_in, args.p_out, args.feature_dim,
                          args.feature_shift, args.seed)
    if args.labeled_fraction is not None:
        bundle = bundle.replace(split=_split_for(bundle, derive_seed(args.seed, 11), args.labeled_fraction))
    save_bundle(bundle, args.out)


def cmd_corrupt(args) -> None:
    bundle = load_bundle(args.bundle)
    split = _split_for(bundle, derive_seed(args.seed, 11), args.labeled_fraction)
    t = build_transition_matrix(args.kind, args.rate, bundle.num_classes)
    labels = inject_label_noise(bundle.clean_labels, t, derive_seed(args.seed, 13), indices=split.labeled)
    x = inject_attribute_noise(bundle.features, args.attr_ratio, derive_seed(args.seed, 14),
                               rows=split.labeled)
    out = Path(args.out)
    save_bundle(bundle.replace(features=x, split=split), out)
    write_label_csv(out / OBSERVED_FILE, np.argmax(labels.observed, axis=1))


def cmd_train(args) -> None:
    bundle = load_bundle(args.bundle)
    config = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    if args.seed is not None:
        config = TrainConfig.from_mapping({**config.to_json(), "seed": args.seed})
    if args.epochs is not None:
        config = TrainConfig.from_mapping({**config.to_json(), "epochs": args.epochs})
    params, trace = train_encoder(bundle, config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "params.json", params.to_json())
    _write_json(out / "config.json", config.to_json())
    write_loss_trace(out / "loss_trace.csv", trace)


def cmd_embed(args) -> None:
    bundle = load_bundle(args.bundle)
    params = EncoderParams.from_json(json.loads(Path(args.params).read_text(encoding="utf-8")))
    _write_matrix(args.out, harness.embed(params, bundle, attention=args.attention))


def cmd_classify(args) -> None:
    bundle = load_bundle(args.bundle)
    h = _read_matrix(args.embeddings)
    labels = _labels_for(bundle, Path(args.bundle), args.observed)
    split = _split_for(bundle, derive_seed(args.seed, 11), args.labeled_fraction)
    eta = default_step_size(h, args.eta_scale)
    _, probs = train_transductive(h, labels, split, eta, args.epochs)
    pred = predict_labels(probs)
    write_predictions(args.out, pred, labels.observed, bundle.clean_labels, split)
    acc = accuracy(pred[split.unlabeled], bundle.clean_labels, split.unlabeled)
    print(f"test accuracy {acc:.4f}")


def cmd_bound(args) -> None:
    bundle = load_bundle(args.bundle)
    h = _read_matrix(args.embeddings)
    labels = _labels_for(bundle, Path(args.bundle), args.observed)
    split = _split_for(bundle, derive_seed(args.seed, 11), args.labeled_fraction)
    report = evaluate_bound(h, bundle.clean_labels, labels.observed, split, None, args.t, args.c0, args.x)
    _write_json(args.out, report.to_json())


def cmd_project(args) -> None:
    bundle = load_bundle(args.bundle)
    h = _read_matrix(args.embeddings)
    labels = _labels_for(bundle, Path(args.bundle), args.observed)
    noise = labels.noise if np.any(labels.noise) else None
    harness.emit_projection_csv(h, bundle.clean_labels, noise, args.out)


def _experiment_config(args) -> harness.ExperimentConfig:
    config = harness.ExperimentConfig.from_file(args.config)
    if args.seed is not None:
        raw = config.to_json()
        raw["seeds"] = [args.seed]
        config = harness.ExperimentConfig.from_mapping(raw)
    return config


def _grid(text: str | None, default):
    if text is None:
        return default
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"malformed grid {text!r}") from None


def cmd_cv(args) -> None:
    config = _experiment_config(args)
    result = harness.cross_validate(config, _grid(args.gamma_grid, harness.GAMMA_GRID),
                                    _grid(args.tau_grid, harness.TAU_GRID), args.folds)
    _write_json(args.out, result.to_json())
    print(f"best rank_ratio {result.best_gamma}  best tnn_weight {result.best_tau}")


def cmd_experiment(args) -> None:
    config = _experiment_config(args)
    records = harness.run_experiment(config, out_dir=args.out)
    out = Path(args.out or config.output_dir or ".")
    _write_json(out / "summary.json", harness.summarize(records))
    failed = sum(r["error"] is not None for r in records)
    print(f"{len(records)} runs, {failed} failed -> {out / 'records.jsonl'}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gcl-lrr", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--seed", type=int, default=None if name in ("train", "cv", "experiment") else 0)
        sp.add_argument("--out", required=name != "experiment")
        sp.set_defaults(func=func)
        return sp

    sp = add("generate", cmd_generate, "write a stochastic-block-model bundle")
    sp.add_argument("--blocks", type=int, default=3)
    sp.add_argument("--per-block", type=int, default=100)
    sp.add_argument("--p-in", type=float, default=0.1)
    sp.add_argument("--p-out", type=float, default=0.01)
    sp.add_argument("--feature-dim", type=int, default=16)
    sp.add_argument("--feature-shift", type=float, default=1.0)
    sp.add_argument("--labeled-fraction", type=float)

    sp = add("corrupt", cmd_corrupt, "inject label and attribute noise into labeled nodes")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--kind", choices=["symmetric", "asymmetric"], default="symmetric")
    sp.add_argument("--rate", type=float, default=0.4)
    sp.add_argument("--attr-ratio", type=float, default=0.0)
    sp.add_argument("--labeled-fraction", type=float)

    sp = add("train", cmd_train, "train the GCL-LRR encoder")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--config", help="TrainConfig as .json or .toml")
    sp.add_argument("--epochs", type=int)

    sp = add("embed", cmd_embed, "write node embeddings from trained weights")
    sp.add_argument("--bundle", required=True)
    sp.add_argument("--params", required=True)
    sp.add_argument("--attention", action="store_true", help="apply the low-rank attention layer")

    for name, func, help_ in (("classify", cmd_classify, "fit the transductive classifier"),
                              ("bound", cmd_bound, "evaluate test-loss bound components"),
                              ("project", cmd_project, "eigen-projection / concentration CSV")):
        sp = add(name, func, help_)
        sp.add_argument("--bundle", required=True)
        sp.add_argument("--embeddings", required=True)
        sp.add_argument("--observed", help=f"node,label CSV (default: <bundle>/{OBSERVED_FILE})")
        if name != "project":
            sp.add_argument("--labeled-fraction", type=float)
        if name == "classify":
            sp.add_argument("--epochs", type=int, default=500)
            sp.add_argument("--eta-scale", type=float, default=0.9)
        if name == "bound":
            sp.add_argument("--t", type=int, default=100)
            sp.add_argument("--c0", type=float, default=1.0)
            sp.add_argument("--x", type=float, default=1.0)

    sp = add("cv", cmd_cv, "cross-validate rank ratio and TNN weight")
    sp.add_argument("--config", required=True, help="experiment JSON")
    sp.add_argument("--gamma-grid")
    sp.add_argument("--tau-grid")
    sp.add_argument("--folds", type=int, default=5)

    sp = add("experiment", cmd_experiment, "run every seed x variant cell")
    sp.add_argument("--config", required=True, help="experiment JSON")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, ContractError, BundleFormatError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, DegenerateInputError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
