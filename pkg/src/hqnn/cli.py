"""``hqnn`` command-line entry point.

Exit codes: 0 ok, 2 configuration error, 3 dataset error, 4 compatibility error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import datasets, diagnostics, pipeline
from .checkpoint import atomic_write_text, load_checkpoint
from .config import ExperimentConfig
from .errors import CheckpointFormatError, CompatibilityError, ConfigurationError, DatasetError
from .hybrid import CoarseToFine, validate_clusters

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_COMPAT = 0, 2, 3, 4

log = logging.getLogger("hqnn")


def _load_config(args) -> ExperimentConfig:
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "epochs", None) is not None:
        overrides.append(f"train.epochs={args.epochs}")
    if getattr(args, "output_dir", None) is not None:
        overrides.append(f"output_dir={args.output_dir}")
    return config_mod.load(args.config, overrides).validate()


def cmd_train(args) -> int:
    cfg = _load_config(args)
    train_set, val_set = pipeline.load_splits(cfg)
    model, history = pipeline.fit(cfg, train_set, val_set)
    out = Path(cfg.output_dir)
    pipeline.write_model(out, "model", model, cfg, history, train_set.class_names)
    atomic_write_text(out / "history.csv", pipeline.history_csv(history))
    atomic_write_text(out / "config.yaml", cfg.dumps())
    last = history.rows()[-1]
    print(f"trained {cfg.model.kind}: epochs={last[0]} loss={last[1]:.4f} train_acc={last[2]:.4f} "
          f"val_acc={'n/a' if last[3] is None else f'{last[3]:.4f}'} -> {out}")
    return EXIT_OK


def _eval_set(args, seed: int) -> datasets.ImageSet:
    if args.config:
        cfg = config_mod.load(args.config, list(args.set or [])).validate()
        train_set, val_set = pipeline.load_splits(cfg)
        if args.split == "train":
            return train_set
        if args.split == "all":
            return datasets.ImageSet(np.concatenate([train_set.images, val_set.images]),
                                     np.concatenate([train_set.labels, val_set.labels]),
                                     train_set.class_names, train_set.source_ids + val_set.source_ids)
        return val_set
    if not args.data:
        raise ConfigurationError("eval needs --config or --data")
    manifest = datasets.load_directory(args.data)
    if args.split != "all":
        tr, va = datasets.split(manifest, 0.8, seed)
        manifest = tr if args.split == "train" else va
    return datasets.load_images(manifest, args.image_size)


def cmd_eval(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    data = _eval_set(args, int(meta.get("seed", 0)))
    if len(data) == 0:
        raise DatasetError("evaluation dataset is empty")
    if data.n_classes != model.n_classes:
        raise CompatibilityError(f"checkpoint predicts {model.n_classes} classes, dataset has {data.n_classes}")
    if tuple(data.images.shape[1:]) != tuple(model.input_shape):
        raise CompatibilityError(f"checkpoint expects inputs {model.input_shape}, dataset has {data.images.shape[1:]}")
    preds, truth = pipeline.predict_set(model, data)
    out = Path(args.output_dir)
    rep = pipeline.write_report(out, "report", truth, preds, data.class_names)
    print(f"accuracy={rep.accuracy:.4f} on {len(data)} images -> {out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model, meta = load_checkpoint(args.checkpoint)
    try:
        raw = Path(args.image).read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read {args.image}: {exc}") from exc
    c, h, w = model.input_shape
    if h != w or c != 3:
        raise CompatibilityError(f"checkpoint input shape {model.input_shape} is not square RGB")
    probs = model.forward(datasets.to_tensor(raw, h))
    names = meta.get("class_names") or [str(i) for i in range(model.n_classes)]
    best = int(np.argmax(probs))
    print(f"{names[best]}\t{probs[best]:.4f}")
    return EXIT_OK


def _load_or_fit(cfg, ckpt: str | None, train_set, val_set, n_classes: int):
    if ckpt:
        model, _ = load_checkpoint(ckpt)
        if model.n_classes != n_classes:
            raise CompatibilityError(f"{ckpt} predicts {model.n_classes} classes, expected {n_classes}")
        return model, None
    return pipeline.fit(cfg, train_set, val_set)


def cmd_coarse2fine(args) -> int:
    cfg = _load_config(args)
    c2f = cfg.coarse2fine
    clusters = c2f.clusters
    train_set, val_set = pipeline.load_splits(cfg)
    validate_clusters(clusters, train_set.class_names)
    out = Path(cfg.output_dir)
    names = list(clusters)

    coarse_train = datasets.relabel_clusters(train_set, clusters)
    coarse_val = datasets.relabel_clusters(val_set, clusters)
    coarse, hist = _load_or_fit(cfg, c2f.coarse_checkpoint, coarse_train, coarse_val, len(names))
    if hist is not None:
        pipeline.write_model(out, "coarse", coarse, cfg, hist, names)
    preds, truth = pipeline.predict_set(coarse, coarse_val)
    pipeline.write_report(out, "coarse_report", truth, preds, names, "coarse")

    fine = {}
    for name, members in clusters.items():
        if len(members) < 2:
            fine[name] = None
            continue
        ftrain = datasets.cluster_subset(train_set, clusters, name)
        fval = datasets.cluster_subset(val_set, clusters, name)
        model, hist = _load_or_fit(cfg, c2f.fine_checkpoints.get(name), ftrain, fval, len(members))
        if hist is not None:
            pipeline.write_model(out, f"fine_{name}", model, cfg, hist, members)
        if len(fval):
            p, t = pipeline.predict_set(model, fval)
            pipeline.write_report(out, f"fine_{name}_report", t, p, list(members), name)
        fine[name] = model

    clf = CoarseToFine(coarse, fine, clusters, train_set.class_names)
    composite = clf.predict(val_set.images)
    rep = pipeline.write_report(out, "composite_report", val_set.labels, composite, train_set.class_names,
                                "coarse-to-fine")
    atomic_write_text(out / "config.yaml", cfg.dumps())
    print(f"coarse-to-fine accuracy={rep.accuracy:.4f} on {len(val_set)} images -> {out}")
    return EXIT_OK


def cmd_circuit_diag(args) -> int:
    try:
        checks = diagnostics.golden_checks(args.name)
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from exc
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:<24} max_err={c.max_error:.1e}  {c.detail}")
    return EXIT_OK if all(c.passed for c in checks) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hqnn", description="Hybrid quantum-classical CNN toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    def config_args(sp):
        sp.add_argument("config", help="YAML experiment config")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key, e.g. train.lr=0.001")
        sp.add_argument("--output-dir")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--epochs", type=int)

    sp = sub.add_parser("train", help="train one model and write model.ckpt + history.csv")
    config_args(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint and write confusion matrix + report")
    sp.add_argument("checkpoint")
    src = sp.add_mutually_exclusive_group()
    src.add_argument("--config", help="experiment config describing the dataset")
    src.add_argument("--data", help="directory-per-class image folder")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--split", choices=("val", "train", "all"), default="val")
    sp.add_argument("--image-size", type=int, default=64)
    sp.add_argument("--output-dir", default=".")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("predict", help="classify one image")
    sp.add_argument("checkpoint")
    sp.add_argument("image")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("coarse2fine", help="train/load the coarse and per-cluster models and report")
    config_args(sp)
    sp.set_defaults(func=cmd_coarse2fine)

    sp = sub.add_parser("circuit-diag", help="closed-form checks for a built-in circuit")
    sp.add_argument("name")
    sp.set_defaults(func=cmd_circuit_diag)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CompatibilityError, CheckpointFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPAT
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DatasetError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
