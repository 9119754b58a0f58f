"""Image datasets: class-folder/CSV manifests, stratified splits and a synthetic generator."""
from __future__ import annotations

import csv
import io
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigurationError, DatasetError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


@dataclass
class DatasetManifest:
    class_names: list[str]
    items: list[tuple[str, int]]
    split_seed: int | None = None

    def __post_init__(self):
        paths = [p for p, _ in self.items]
        if len(set(paths)) != len(paths):
            raise DatasetError("manifest lists the same path twice")
        n = len(self.class_names)
        if any(not 0 <= lab < n for _, lab in self.items):
            raise DatasetError("manifest label outside the class list")

    def __len__(self):
        return len(self.items)

    @property
    def labels(self) -> np.ndarray:
        return np.array([lab for _, lab in self.items], dtype=np.int64)


@dataclass
class ImageSet:
    """Decoded images ``(N, 3, H, W)`` in [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    class_names: list[str]
    source_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise DatasetError("images and labels differ in length")
        if not self.source_ids:
            self.source_ids = [f"item-{i:05d}" for i in range(len(self.labels))]

    def __len__(self):
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def subset(self, index) -> "ImageSet":
        index = np.asarray(index, dtype=np.int64)
        return ImageSet(self.images[index], self.labels[index], list(self.class_names),
                        [self.source_ids[i] for i in index])


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("HQNN_THREADS", "")))
    except ValueError:
        return max(1, os.cpu_count() or 1)


def load_directory(root) -> DatasetManifest:
    """One sub-directory per class, classes and files in sorted order."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset directory {root} does not exist")
    class_names: list[str] = []
    items: list[tuple[str, int]] = []
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        files = sorted(p for p in class_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            warnings.warn(f"skipping empty class directory {class_dir}")
            continue
        label = len(class_names)
        class_names.append(class_dir.name)
        items.extend((str(p), label) for p in files)
    if not items:
        raise DatasetError(f"no images found under {root}")
    return DatasetManifest(class_names, items)


def load_csv_manifest(path) -> DatasetManifest:
    """``path,label`` rows; relative paths resolve against the CSV's directory."""
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            p = Path(row["path"])
            rows.append((str(p if p.is_absolute() else path.parent / p), row["label"]))
    if not rows:
        raise DatasetError(f"manifest {path} is empty")
    class_names = sorted({lab for _, lab in rows})
    index = {c: i for i, c in enumerate(class_names)}
    return DatasetManifest(class_names, sorted((p, index[lab]) for p, lab in rows))


def split(manifest: DatasetManifest, train_fraction: float = 0.8, seed: int = 0):
    """Stratified, seeded train/validation split. Item order within each part follows the manifest."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    labels = manifest.labels
    train_idx: list[int] = []
    for c in range(len(manifest.class_names)):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            continue
        if len(members) < 2:
            raise DatasetError(f"class {manifest.class_names[c]!r} has fewer than 2 items; cannot stratify")
        n_train = min(max(int(math.floor(train_fraction * len(members) + 0.5)), 1), len(members) - 1)
        train_idx.extend(rng.permutation(members)[:n_train].tolist())
    chosen = set(train_idx)
    train = [it for i, it in enumerate(manifest.items) if i in chosen]
    val = [it for i, it in enumerate(manifest.items) if i not in chosen]
    names = list(manifest.class_names)
    return DatasetManifest(names, train, seed), DatasetManifest(names, val, seed)


def split_indices(labels: np.ndarray, train_fraction: float = 0.8, seed: int = 0):
    """Same stratified split as :func:`split`, on a plain label array."""
    labels = np.asarray(labels)
    names = [str(c) for c in range(int(labels.max()) + 1)] if labels.size else []
    manifest = DatasetManifest(names, [(str(i), int(lab)) for i, lab in enumerate(labels)])
    train, val = split(manifest, train_fraction, seed)
    return np.array([int(p) for p, _ in train.items], dtype=np.int64), np.array([int(p) for p, _ in val.items], dtype=np.int64)


def to_tensor(data: bytes, size: int = 64) -> np.ndarray:
    """Decode PNG/JPEG bytes to a ``(3, size, size)`` float array in [0, 1].

    Non-square images are center-cropped; larger ones are resized bilinearly.
    """
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError) as exc:
        raise DatasetError(f"cannot decode image: {exc}") from exc
    img = img.convert("RGB")
    w, h = img.size
    side = min(w, h)
    if side < size:
        raise DatasetError(f"image {w}x{h} is smaller than {size}x{size}")
    if w != h:
        left, top = (w - side) // 2, (h - side) // 2
        img = img.crop((left, top, left + side, top + side))
    if side != size:
        img = img.resize((size, size), Image.BILINEAR)
    return np.asarray(img, dtype=np.float64).transpose(2, 0, 1) / 255.0


def _read_one(path: str, size: int) -> np.ndarray:
    try:
        return to_tensor(Path(path).read_bytes(), size)
    except (OSError, DatasetError) as exc:
        raise DatasetError(f"{path}: {exc}") from exc


def load_images(manifest: DatasetManifest, image_size: int = 64) -> ImageSet:
    paths = [p for p, _ in manifest.items]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        arrays = list(pool.map(lambda p: _read_one(p, image_size), paths))
    images = np.stack(arrays) if arrays else np.zeros((0, 3, image_size, image_size))
    return ImageSet(images, manifest.labels, list(manifest.class_names), paths)


def stratified_subset(manifest: DatasetManifest, per_class: int, seed: int = 0) -> DatasetManifest:
    """At most ``per_class`` seeded picks from every class."""
    rng = np.random.default_rng(seed)
    labels = manifest.labels
    keep: set[int] = set()
    for c in range(len(manifest.class_names)):
        members = np.flatnonzero(labels == c)
        keep.update(rng.permutation(members)[:per_class].tolist())
    return DatasetManifest(list(manifest.class_names), [it for i, it in enumerate(manifest.items) if i in keep])


# -- clusters ----------------------------------------------------------------


def cluster_lookup(class_names: Sequence[str], clusters: Mapping[str, Sequence[str]]) -> np.ndarray:
    """Coarse label for each fine class index."""
    owner: dict[str, int] = {}
    for ci, members in enumerate(clusters.values()):
        for c in members:
            if c in owner:
                raise ConfigurationError(f"class {c!r} appears in more than one cluster")
            owner[c] = ci
    missing = [c for c in class_names if c not in owner]
    if missing:
        raise ConfigurationError(f"classes not mapped to any cluster: {missing}")
    return np.array([owner[c] for c in class_names], dtype=np.int64)


def relabel_clusters(data, clusters: Mapping[str, Sequence[str]]):
    """Replace fine labels by cluster labels; works on a manifest or an :class:`ImageSet`."""
    lookup = cluster_lookup(data.class_names, clusters)
    names = list(clusters)
    if isinstance(data, DatasetManifest):
        return DatasetManifest(names, [(p, int(lookup[lab])) for p, lab in data.items], data.split_seed)
    return ImageSet(data.images, lookup[data.labels], names, list(data.source_ids))


def cluster_subset(data: ImageSet, clusters: Mapping[str, Sequence[str]], name: str) -> ImageSet:
    """Images of one cluster, relabelled to the cluster's member order."""
    members = list(clusters[name])
    fine_ids = [data.class_names.index(c) for c in members]
    remap = {g: i for i, g in enumerate(fine_ids)}
    idx = np.flatnonzero(np.isin(data.labels, fine_ids))
    sub = data.subset(idx)
    return ImageSet(sub.images, np.array([remap[int(g)] for g in sub.labels], dtype=np.int64), members,
                    sub.source_ids)


# -- synthetic data ----------------------------------------------------------


def grating_params(n_classes: int) -> list[tuple[float, float]]:
    """(orientation radians, cycles per image) for each synthetic class."""
    n_orient = max(2, math.ceil(n_classes / 2))
    out = []
    for k in range(n_classes):
        orient = math.pi * (k % n_orient) / n_orient
        freq = 2.0 if k < n_orient else 4.0
        out.append((orient, freq))
    return out


def synthetic_generate(
    n_classes: int,
    n_per_class: int,
    image_size: int = 16,
    seed: int = 0,
    noise: float = 0.1,
    class_names: Sequence[str] | None = None,
) -> ImageSet:
    """Oriented sinusoidal gratings with a random phase per image plus pixel noise.

    The random phase makes every class average to the same flat image, so raw
    pixels are not linearly separable while local orientation/frequency still is.
    """
    if n_classes < 2:
        raise ValueError("n_classes must be at least 2")
    names = list(class_names) if class_names is not None else [f"class_{k}" for k in range(n_classes)]
    if len(names) != n_classes:
        raise ValueError("class_names length must equal n_classes")
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:image_size, 0:image_size] / image_size
    images = np.empty((n_classes * n_per_class, 3, image_size, image_size))
    labels = np.repeat(np.arange(n_classes), n_per_class)
    for i, k in enumerate(labels):
        orient, freq = grating_params(n_classes)[k]
        phase = rng.uniform(0, 2 * math.pi)
        wave = np.sin(2 * math.pi * freq * (xx * math.cos(orient) + yy * math.sin(orient)) + phase)
        img = 0.5 + 0.3 * wave[None] + noise * rng.standard_normal((3, image_size, image_size))
        images[i] = np.clip(img, 0.0, 1.0)
    ids = [f"synthetic-{seed}-{i:05d}" for i in range(len(labels))]
    return ImageSet(images, labels, names, ids)


def export_directory(data: ImageSet, root) -> None:
    """Write images as 8-bit PNGs in the class-folder layout ``load_directory`` reads."""
    root = Path(root)
    counters: dict[int, int] = {}
    for img, lab in zip(data.images, data.labels):
        d = root / data.class_names[lab]
        d.mkdir(parents=True, exist_ok=True)
        n = counters.get(int(lab), 0)
        counters[int(lab)] = n + 1
        pixels = np.round(np.clip(img, 0, 1) * 255).astype(np.uint8).transpose(1, 2, 0)
        Image.fromarray(pixels, "RGB").save(d / f"img_{n:05d}.png")
