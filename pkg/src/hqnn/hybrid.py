"""Hybrid quantum-classical classifier, its classical baselines and training loops.

Pipeline for one image batch::

    CNN -> Dense(->4) -> angle embedding -> 4-qubit circuit -> 16 probabilities
        -> Dense(16 -> n_classes) -> softmax

Gradients through the circuit come from the parameter-shift Jacobian, so the
whole stack trains end to end with one Adam optimizer.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import circuits, neural
from .errors import ConfigurationError

log = logging.getLogger(__name__)

CLASSICAL_VARIANTS = ("classical_v1", "classical_v2")
MODEL_KINDS = circuits.CIRCUIT_NAMES + CLASSICAL_VARIANTS

DEFAULT_CNN: list[dict] = [
    {"kind": "conv2d", "out_channels": 6, "kernel": 5},
    {"kind": "relu"},
    {"kind": "maxpool2d"},
    {"kind": "conv2d", "out_channels": 16, "kernel": 5},
    {"kind": "relu"},
    {"kind": "maxpool2d"},
    {"kind": "flatten"},
    {"kind": "dense", "units": 64},
    {"kind": "tanh"},
]

# Stand-ins for the quantum layer: both start by squashing the 4 adapter outputs.
_SUBSTITUTES: dict[str, list[dict]] = {
    "classical_v1": [{"kind": "tanh"}, {"kind": "dense", "units": 16}, {"kind": "tanh"}],
    "classical_v2": [
        {"kind": "tanh"},
        {"kind": "dense", "units": 256}, {"kind": "relu"},
        {"kind": "dense", "units": 64}, {"kind": "relu"},
        {"kind": "dense", "units": 32}, {"kind": "relu"},
        {"kind": "dense", "units": 10}, {"kind": "tanh"},
    ],
}

EUROSAT_CLASSES = (
    "AnnualCrop", "Forest", "HerbaceousVegetation", "Highway", "Industrial",
    "Pasture", "PermanentCrop", "Residential", "River", "SeaLake",
)
DEFAULT_CLUSTERS: dict[str, tuple[str, ...]] = {
    "Vegetation": ("AnnualCrop", "PermanentCrop", "Pasture", "Forest", "HerbaceousVegetation"),
    "Urban": ("Highway", "Industrial", "Residential"),
    "WaterBodies": ("River", "SeaLake"),
}


def angle_embedding(h) -> np.ndarray:
    """Map unbounded activations to rotation angles in (-pi, pi)."""
    h = np.asarray(h, dtype=np.float64)
    if not np.all(np.isfinite(h)):
        raise ValueError("angle_embedding got non-finite activations")
    return math.pi * np.tanh(h)


class QuantumLayer(neural.Layer):
    """Angle embedding followed by a parametrized circuit; outputs basis probabilities."""

    kind = "quantum"

    def __init__(self, spec: circuits.CircuitSpec, trainable: bool = True):
        super().__init__()
        self.spec = spec
        self.trainable = trainable
        # zero init: the first forward pass runs the identity-rotation circuit
        self.theta = np.zeros(spec.n_weight_params)
        if spec.n_weight_params and trainable:
            self.params["theta"] = self.theta

    def output_shape(self, in_shape):
        if in_shape != (self.spec.n_data_params,):
            raise ValueError(f"quantum layer expects ({self.spec.n_data_params},) input, got {in_shape}")
        return (self.spec.dim,)

    def config(self):
        return {"kind": self.kind, "circuit": self.spec.name}

    def forward(self, x):
        self._t = np.tanh(x)
        self._angles = math.pi * self._t
        if not np.all(np.isfinite(self._angles)):
            raise ValueError("non-finite activations reached the quantum layer")
        return circuits.run_batch(self.spec, self._angles, self.theta)

    def backward(self, grad):
        jac = circuits.param_shift_jacobian_batch(self.spec, self._angles, self.theta)
        g_params = np.einsum("bk,bkp->bp", grad, jac)
        nd = self.spec.n_data_params
        if "theta" in self.params:
            self.grads["theta"] = g_params[:, nd:].sum(axis=0)
        return g_params[:, :nd] * math.pi * (1.0 - self._t**2)


class HybridModel:
    """CNN feature extractor, 4-wide adapter, quantum layer (or classical stand-in), output adapter."""

    def __init__(
        self,
        n_classes: int,
        kind: str = "real_amplitudes",
        input_shape: Sequence[int] = (3, 64, 64),
        cnn: Sequence[Mapping] | None = None,
        seed: int = 0,
        freeze_quantum_weights: bool = False,
        readout_init_scale: float = 1.0,
    ):
        if n_classes < 2:
            raise ConfigurationError("a classifier needs at least 2 classes")
        if kind not in MODEL_KINDS:
            raise ConfigurationError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
        self.n_classes = int(n_classes)
        self.kind = kind
        self.input_shape = tuple(int(s) for s in input_shape)
        self.cnn_specs = [dict(s) for s in (cnn if cnn is not None else DEFAULT_CNN)]
        self.seed = int(seed)
        self.freeze_quantum_weights = freeze_quantum_weights

        rng = np.random.default_rng(seed)
        try:
            self.cnn = neural.Sequential(self.cnn_specs, self.input_shape, rng)
        except (KeyError, ValueError) as exc:
            raise ConfigurationError(f"bad CNN definition: {exc}") from exc
        if len(self.cnn.out_shape) != 1:
            raise ConfigurationError(f"CNN must end flat, ends with shape {self.cnn.out_shape}")
        self.adapter_in = neural.Dense(self.cnn.out_shape[0], 4, rng)
        if kind in circuits.CIRCUIT_NAMES:
            self.quantum = QuantumLayer(circuits.get_circuit(kind), trainable=not freeze_quantum_weights)
            self.middle = neural.Sequential([], (4,), rng)
            self.middle.layers.append(self.quantum)
            self.middle.out_shape = self.quantum.output_shape((4,))
        else:
            self.quantum = None
            self.middle = neural.Sequential(_SUBSTITUTES[kind], (4,), rng)
        self.adapter_out = neural.Dense(self.middle.out_shape[0], self.n_classes, rng)
        # the readout is a probability vector with entries near 1/16, so fan-in init gives near-flat
        # logits and a weak initial gradient into the circuit; a larger output init compensates
        self.adapter_out.params["w"] *= readout_init_scale

    @property
    def is_quantum(self) -> bool:
        return self.quantum is not None

    def topology(self) -> dict:
        return {
            "kind": self.kind,
            "n_classes": self.n_classes,
            "input_shape": list(self.input_shape),
            "cnn": self.cnn_specs,
            "seed": self.seed,
            "freeze_quantum_weights": self.freeze_quantum_weights,
        }

    @classmethod
    def from_topology(cls, topo: Mapping) -> "HybridModel":
        return cls(
            n_classes=topo["n_classes"], kind=topo["kind"], input_shape=topo["input_shape"],
            cnn=topo["cnn"], seed=topo.get("seed", 0),
            freeze_quantum_weights=topo.get("freeze_quantum_weights", False),
        )

    # parameters are exposed by reference so optimizers update in place
    def params(self) -> dict[str, np.ndarray]:
        out = self.cnn.named_params("cnn.")
        out.update({f"adapter_in.{k}": v for k, v in self.adapter_in.params.items()})
        if self.is_quantum:
            out.update({f"quantum.{k}": v for k, v in self.quantum.params.items()})
        else:
            out.update(self.middle.named_params("substitute."))
        out.update({f"adapter_out.{k}": v for k, v in self.adapter_out.params.items()})
        return out

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Every stored array, including frozen quantum weights."""
        out = self.params()
        if self.is_quantum and self.quantum.spec.n_weight_params and "quantum.theta" not in out:
            out["quantum.theta"] = self.quantum.theta
        return out

    def grads(self) -> dict[str, np.ndarray]:
        out = self.cnn.named_grads("cnn.")
        out.update({f"adapter_in.{k}": v for k, v in self.adapter_in.grads.items()})
        if self.is_quantum:
            out.update({f"quantum.{k}": v for k, v in self.quantum.grads.items()})
        else:
            out.update(self.middle.named_grads("substitute."))
        out.update({f"adapter_out.{k}": v for k, v in self.adapter_out.grads.items()})
        return out

    def _as_batch(self, images) -> np.ndarray:
        x = np.asarray(images, dtype=np.float64)
        if x.shape == self.input_shape:
            x = x[None]
        if x.ndim != 4 or x.shape[1:] != self.input_shape:
            raise ValueError(f"expected images of shape (N, {', '.join(map(str, self.input_shape))}), got {x.shape}")
        return x

    def logits(self, images) -> np.ndarray:
        x = self._as_batch(images)
        h = self.adapter_in.forward(self.cnn.forward(x))
        return self.adapter_out.forward(self.middle.forward(h))

    def forward(self, images) -> np.ndarray:
        """Class probabilities; a single ``(C, H, W)`` image gives a 1-D vector."""
        single = np.asarray(images).shape == self.input_shape
        probs = neural.softmax(self.logits(images))
        return probs[0] if single else probs

    def predict(self, images) -> np.ndarray:
        return np.argmax(self.logits(images), axis=1)

    def backward(self, grad_logits: np.ndarray) -> dict[str, np.ndarray]:
        g = self.adapter_out.backward(grad_logits)
        g = self.middle.backward(g)
        g = self.adapter_in.backward(g)
        self.cnn.backward(g)
        return self.grads()

    def loss_and_grads(self, images, labels):
        """Mean cross-entropy over the batch and its gradient for every trainable array."""
        logits = self.logits(images)
        loss, grad = neural.softmax_cross_entropy(logits, labels)
        return loss, self.backward(grad)


# -- training / evaluation ---------------------------------------------------


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 0.0002
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0:
            raise ConfigurationError("epochs must be positive")
        if self.lr < 0 or not math.isfinite(self.lr):
            raise ConfigurationError("lr must be a finite non-negative number")
        if self.batch_size <= 0:
            raise ConfigurationError("batch_size must be positive")


@dataclass
class History:
    epoch: list[int] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float | None] = field(default_factory=list)

    def rows(self):
        return list(zip(self.epoch, self.train_loss, self.train_acc, self.val_acc))


def _check_labels(labels: np.ndarray, n_classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")


def accuracy(model: HybridModel, images, labels, batch_size: int = 256) -> float:
    preds, truth = evaluate(model, images, labels, batch_size)
    return float(np.mean(preds == truth))


def train(
    model: HybridModel,
    images: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    val: tuple[np.ndarray, np.ndarray] | None = None,
    on_epoch: Callable[[int, History], None] | None = None,
) -> History:
    """Mini-batch Adam training; deterministic given ``config.seed``."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) == 0:
        raise ValueError("cannot train on an empty dataset")
    if len(images) != len(labels):
        raise ValueError("images and labels differ in length")
    _check_labels(labels, model.n_classes)

    rng = np.random.default_rng(config.seed)
    adam = neural.AdamState(lr=config.lr)
    params = model.params()
    history = History()
    n = len(images)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        losses, weights = [], []
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = model.loss_and_grads(images[idx], labels[idx])
            neural.adam_step(params, grads, adam)
            losses.append(loss)
            weights.append(len(idx))
        history.epoch.append(epoch)
        history.train_loss.append(float(np.average(losses, weights=weights)))
        history.train_acc.append(accuracy(model, images, labels))
        history.val_acc.append(accuracy(model, *val) if val is not None and len(val[0]) else None)
        log.info("epoch %d loss %.4f train_acc %.4f val_acc %s", epoch, history.train_loss[-1],
                 history.train_acc[-1], history.val_acc[-1])
        if on_epoch is not None:
            on_epoch(epoch, history)
    return history


def evaluate(model: HybridModel, images, labels, batch_size: int = 256):
    """Argmax predictions alongside the ground truth, in dataset order."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if len(images) != len(labels):
        raise ValueError("images and labels differ in length")
    preds = [model.predict(images[s:s + batch_size]) for s in range(0, len(images), batch_size)]
    preds = np.concatenate(preds) if preds else np.zeros(0, dtype=np.int64)
    return preds.astype(np.int64), labels.copy()


# -- coarse-to-fine ----------------------------------------------------------


def validate_clusters(clusters: Mapping[str, Sequence[str]], class_names: Sequence[str]) -> None:
    seen: list[str] = []
    for members in clusters.values():
        seen.extend(members)
    dupes = {c for c in seen if seen.count(c) > 1}
    if dupes:
        raise ConfigurationError(f"classes assigned to more than one cluster: {sorted(dupes)}")
    missing = set(class_names) - set(seen)
    extra = set(seen) - set(class_names)
    if missing:
        raise ConfigurationError(f"classes not covered by any cluster: {sorted(missing)}")
    if extra:
        raise ConfigurationError(f"clusters mention unknown classes: {sorted(extra)}")


class CoarseToFine:
    """Routes each image through the coarse model to one specialist fine model.

    ``clusters`` maps cluster name to member class names, in the coarse model's
    class order; each fine model's label ``i`` means ``clusters[name][i]``.
    """

    def __init__(
        self,
        coarse: HybridModel,
        fine: Mapping[str, HybridModel],
        clusters: Mapping[str, Sequence[str]],
        class_names: Sequence[str],
    ):
        validate_clusters(clusters, class_names)
        self.cluster_names = list(clusters)
        if coarse.n_classes != len(self.cluster_names):
            raise ConfigurationError(f"coarse model has {coarse.n_classes} classes for {len(clusters)} clusters")
        for name, members in clusters.items():
            if name not in fine:
                raise ConfigurationError(f"no fine model for cluster {name!r}")
            if len(members) >= 2 and fine[name].n_classes != len(members):
                raise ConfigurationError(
                    f"fine model for {name!r} has {fine[name].n_classes} classes, cluster has {len(members)}"
                )
        self.coarse = coarse
        self.fine = dict(fine)
        self.clusters = {k: list(v) for k, v in clusters.items()}
        self.class_names = list(class_names)
        self._global = {k: np.array([self.class_names.index(c) for c in v]) for k, v in self.clusters.items()}

    def predict_with_route(self, images) -> tuple[np.ndarray, np.ndarray]:
        """Global fine labels plus the coarse cluster index chosen for each image."""
        x = self.coarse._as_batch(images)
        route = self.coarse.predict(x)
        out = np.empty(len(x), dtype=np.int64)
        for ci, name in enumerate(self.cluster_names):
            mask = route == ci
            if not mask.any():
                continue
            members = self._global[name]
            if len(members) == 1:
                out[mask] = members[0]
            else:
                out[mask] = members[self.fine[name].predict(x[mask])]
        return out, route

    def predict(self, images) -> np.ndarray:
        return self.predict_with_route(images)[0]


def coarse_to_fine_predict(coarse, fine, image, clusters=None, class_names=EUROSAT_CLASSES) -> int:
    """Fine label (index into ``class_names``) for a single image."""
    clf = CoarseToFine(coarse, fine, clusters if clusters is not None else DEFAULT_CLUSTERS, class_names)
    return int(clf.predict(image)[0])
