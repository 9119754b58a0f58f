"""Glue between experiment configs, datasets, models and output files."""
from __future__ import annotations

import csv
import io
import logging
from pathlib import Path

import numpy as np

from . import datasets, metrics
from .checkpoint import atomic_write_text, save_checkpoint
from .config import ExperimentConfig
from .errors import DatasetError
from .hybrid import DEFAULT_CNN, History, HybridModel, TrainConfig, evaluate, train

log = logging.getLogger(__name__)


def load_splits(cfg: ExperimentConfig) -> tuple[datasets.ImageSet, datasets.ImageSet]:
    """Train and validation sets described by ``cfg.dataset`` (stratified, seeded)."""
    ds = cfg.dataset
    if ds.kind == "synthetic":
        data = datasets.synthetic_generate(ds.n_classes, ds.n_per_class, ds.image_size, cfg.seed,
                                           noise=ds.noise, class_names=ds.class_names)
        tr, va = datasets.split_indices(data.labels, ds.train_fraction, cfg.seed)
        return data.subset(tr), data.subset(va)
    manifest = datasets.load_directory(ds.path) if ds.kind == "directory" else datasets.load_csv_manifest(ds.path)
    if ds.per_class:
        manifest = datasets.stratified_subset(manifest, ds.per_class, cfg.seed)
    train_m, val_m = datasets.split(manifest, ds.train_fraction, cfg.seed)
    return datasets.load_images(train_m, ds.image_size), datasets.load_images(val_m, ds.image_size)


def build_model(cfg: ExperimentConfig, n_classes: int, kind: str | None = None) -> HybridModel:
    cnn = DEFAULT_CNN if cfg.model.cnn == "default" else cfg.model.cnn
    size = cfg.dataset.image_size
    return HybridModel(n_classes, kind or cfg.model.kind, (3, size, size), cnn, cfg.seed,
                       cfg.model.freeze_quantum_weights, cfg.model.readout_init_scale)


def train_config(cfg: ExperimentConfig) -> TrainConfig:
    return TrainConfig(cfg.train.epochs, cfg.train.lr, cfg.train.batch_size, cfg.seed)


def history_csv(history: History) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "train_loss", "train_acc", "val_acc"])
    for epoch, loss, tacc, vacc in history.rows():
        w.writerow([epoch, repr(loss), repr(tacc), "" if vacc is None else repr(vacc)])
    return buf.getvalue()


def fit(cfg: ExperimentConfig, train_set: datasets.ImageSet, val_set: datasets.ImageSet | None,
        kind: str | None = None) -> tuple[HybridModel, History]:
    if len(train_set) == 0:
        raise DatasetError("training set is empty")
    model = build_model(cfg, train_set.n_classes, kind)
    val = (val_set.images, val_set.labels) if val_set is not None and len(val_set) else None
    history = train(model, train_set.images, train_set.labels, train_config(cfg), val)
    return model, history


def checkpoint_metadata(cfg: ExperimentConfig, history: History, class_names) -> dict:
    # output_dir is left out so the checkpoint bytes do not depend on where they are written
    settings = cfg.to_dict()
    del settings["output_dir"]
    return {
        "class_names": list(class_names),
        "epochs": len(history.epoch),
        "train_loss": history.train_loss,
        "seed": cfg.seed,
        "config": settings,
    }


def write_model(out_dir: Path, name: str, model: HybridModel, cfg: ExperimentConfig, history: History,
                class_names) -> None:
    save_checkpoint(model, out_dir / f"{name}.ckpt", checkpoint_metadata(cfg, history, class_names))


def write_report(out_dir: Path, stem: str, truth, preds, class_names, title: str | None = None) -> metrics.ClassificationReport:
    cm = metrics.confusion_matrix(truth, preds, len(class_names))
    rep = metrics.report(cm)
    prefix = "" if stem == "report" else f"{stem}_"
    atomic_write_text(out_dir / f"{prefix}confusion_matrix.csv", metrics.confusion_csv(cm, class_names))
    atomic_write_text(out_dir / f"{stem}.csv", metrics.report_csv(rep, class_names))
    atomic_write_text(out_dir / f"{stem}.txt", metrics.report_text(rep, class_names, title))
    return rep


def predict_set(model: HybridModel, data: datasets.ImageSet) -> tuple[np.ndarray, np.ndarray]:
    return evaluate(model, data.images, data.labels)
