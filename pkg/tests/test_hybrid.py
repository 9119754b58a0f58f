import math

import numpy as np
import pytest

from hqnn import checkpoint, circuits, hybrid
from hqnn.errors import CheckpointFormatError, CheckpointVersionError, ConfigurationError

TINY_CNN = [
    {"kind": "conv2d", "out_channels": 2, "kernel": 3},
    {"kind": "tanh"},
    {"kind": "maxpool2d"},
    {"kind": "flatten"},
    {"kind": "dense", "units": 8},
    {"kind": "tanh"},
]


def tiny(kind="real_amplitudes", n_classes=2, seed=0, **kw):
    return hybrid.HybridModel(n_classes, kind, (3, 8, 8), TINY_CNN, seed, **kw)


def batch(n=4, n_classes=2, seed=1):
    rng = np.random.default_rng(seed)
    return rng.uniform(0, 1, (n, 3, 8, 8)), rng.integers(0, n_classes, n)


def test_angle_embedding():
    assert np.array_equal(hybrid.angle_embedding(np.zeros(4)), np.zeros(4))
    big = hybrid.angle_embedding(np.array([30.0]))[0]
    assert big <= math.pi and math.pi - big < 1e-12
    h = np.linspace(-5, 5, 101)
    assert np.all(np.diff(hybrid.angle_embedding(h)) >= 0)
    with pytest.raises(ValueError):
        hybrid.angle_embedding(np.array([np.nan]))


def test_embedding_then_circuit_uniform():
    p = circuits.run_circuit(circuits.build_no_entanglement(), hybrid.angle_embedding(np.zeros(4)))
    assert np.allclose(p, 1 / 16, atol=1e-12)


@pytest.mark.parametrize("kind", hybrid.MODEL_KINDS)
def test_end_to_end_gradients_match_finite_differences(kind):
    model = tiny(kind, seed=3)
    x, y = batch()
    _, grads = model.loss_and_grads(x, y)
    grads = {k: v.copy() for k, v in grads.items()}
    h = 1e-5
    rng = np.random.default_rng(0)
    for name, p in model.params().items():
        flat = p.reshape(-1)
        for i in rng.choice(flat.size, size=min(flat.size, 6), replace=False):
            old = flat[i]
            flat[i] = old + h
            up, _ = model.loss_and_grads(x, y)
            flat[i] = old - h
            dn, _ = model.loss_and_grads(x, y)
            flat[i] = old
            num = (up - dn) / (2 * h)
            ana = grads[name].reshape(-1)[i]
            assert abs(num - ana) <= 1e-4 * max(abs(num), abs(ana), 1e-3), (name, i, num, ana)


def test_quantum_weights_registered_only_for_real_amplitudes():
    assert "quantum.theta" in tiny("real_amplitudes").params()
    assert not any("theta" in k for k in tiny("bellman").params())
    assert not any("theta" in k for k in tiny("real_amplitudes", freeze_quantum_weights=True).params())


def test_frozen_quantum_weights_do_not_move():
    model = tiny("real_amplitudes", freeze_quantum_weights=True)
    model.quantum.theta[:] = [0.1, 0.2, 0.3, 0.4]
    x, y = batch(8)
    hybrid.train(model, x, y, hybrid.TrainConfig(epochs=2, lr=0.05, batch_size=4))
    assert np.array_equal(model.quantum.theta, [0.1, 0.2, 0.3, 0.4])


def test_zero_learning_rate_leaves_weights_unchanged():
    model = tiny()
    before = {k: v.copy() for k, v in model.params().items()}
    x, y = batch(8)
    hybrid.train(model, x, y, hybrid.TrainConfig(epochs=2, lr=0.0, batch_size=4))
    for k, v in model.params().items():
        assert np.array_equal(v, before[k])


def test_readout_init_scale_only_scales_output_weights():
    base, scaled = tiny(seed=3), tiny(seed=3, readout_init_scale=5.0)
    for k, v in base.params().items():
        expect = 5.0 * v if k == "adapter_out.w" else v
        assert np.allclose(scaled.params()[k], expect, rtol=0, atol=1e-15)


@pytest.mark.parametrize("kind", hybrid.MODEL_KINDS)
def test_initial_loss_near_log_n(kind):
    model = tiny(kind, n_classes=10)
    x, y = batch(16, 10)
    loss, _ = model.loss_and_grads(x, y)
    assert abs(loss - math.log(10)) <= 0.5


def test_forward_shapes_and_probabilities():
    model = tiny(n_classes=3)
    x, _ = batch(5)
    probs = model.forward(x)
    assert probs.shape == (5, 3) and np.allclose(probs.sum(1), 1)
    assert model.forward(x[0]).shape == (3,)
    assert model.predict(x).shape == (5,)
    with pytest.raises(ValueError):
        model.forward(np.zeros((2, 3, 9, 9)))


def test_model_errors():
    with pytest.raises(ConfigurationError):
        hybrid.HybridModel(2, "ghz", (3, 8, 8), TINY_CNN)
    with pytest.raises(ConfigurationError):
        hybrid.HybridModel(1, "bellman", (3, 8, 8), TINY_CNN)
    with pytest.raises(ConfigurationError):
        hybrid.TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        hybrid.train(tiny(), np.zeros((0, 3, 8, 8)), np.zeros(0), hybrid.TrainConfig())
    with pytest.raises(ValueError):
        hybrid.train(tiny(), *batch(2)[:1], np.array([0, 5]), hybrid.TrainConfig())


def test_training_is_deterministic():
    x, y = batch(12)
    runs = []
    for _ in range(2):
        model = tiny(seed=5)
        h = hybrid.train(model, x, y, hybrid.TrainConfig(epochs=3, lr=0.01, batch_size=4, seed=2), val=(x, y))
        runs.append((h.rows(), checkpoint.dumps(model)))
    assert runs[0] == runs[1]


def test_training_reduces_loss():
    x, y = batch(16)
    h = hybrid.train(tiny(), x, y, hybrid.TrainConfig(epochs=15, lr=0.01, batch_size=4))
    assert h.train_loss[-1] < h.train_loss[0]
    assert h.epoch == list(range(1, 16)) and h.val_acc == [None] * 15


def test_default_cnn_on_64px_input():
    model = hybrid.HybridModel(10, "real_amplitudes")
    assert model.cnn.out_shape == (64,)
    assert model.forward(np.zeros((3, 64, 64))).shape == (10,)


@pytest.mark.parametrize("kind", hybrid.MODEL_KINDS)
def test_checkpoint_round_trip(kind, tmp_path):
    model = tiny(kind, n_classes=3, seed=4)
    if model.quantum is not None and "quantum.theta" in model.params():
        model.quantum.theta[:] = [0.5, -0.2, 0.1, 0.9]
    path = tmp_path / "m.ckpt"
    checkpoint.save_checkpoint(model, path, {"class_names": ["a", "b", "c"]})
    loaded, meta = checkpoint.load_checkpoint(path)
    assert meta == {"class_names": ["a", "b", "c"]}
    x, _ = batch(3)
    assert loaded.forward(x).tobytes() == model.forward(x).tobytes()
    assert checkpoint.dumps(loaded, meta) == path.read_bytes()


def test_checkpoint_errors(tmp_path):
    data = checkpoint.dumps(tiny())
    with pytest.raises(CheckpointFormatError):
        checkpoint.loads(b"XXXX" + data[4:])
    bumped = data[:4] + (checkpoint.VERSION + 1).to_bytes(4, "little") + data[8:]
    with pytest.raises(CheckpointVersionError):
        checkpoint.loads(bumped)
    with pytest.raises(CheckpointFormatError):
        checkpoint.loads(data[:-8])
    with pytest.raises(CheckpointFormatError):
        checkpoint.loads(data + b"\0" * 8)
    with pytest.raises(CheckpointFormatError):
        checkpoint.load_checkpoint(tmp_path / "missing.ckpt")


def test_checkpoint_header_layout():
    data = checkpoint.dumps(tiny())
    assert data[:4] == b"HQNN"
    assert int.from_bytes(data[4:8], "little") == checkpoint.VERSION
    head_len = int.from_bytes(data[8:12], "little")
    assert data[12:12 + head_len].decode().startswith("{")


CLUSTERS = {"A": ["a0", "a1"], "B": ["b0", "b1", "b2"], "C": ["c0"]}
NAMES = ["a0", "a1", "b0", "b1", "b2", "c0"]


def c2f_models():
    coarse = tiny(n_classes=3, seed=1)
    fine = {"A": tiny(n_classes=2, seed=2), "B": tiny(n_classes=3, seed=3), "C": None}
    return coarse, fine


def test_coarse_to_fine_routing():
    coarse, fine = c2f_models()
    clf = hybrid.CoarseToFine(coarse, fine, CLUSTERS, NAMES)
    x, _ = batch(20)
    pred, route = clf.predict_with_route(x)
    owner = {NAMES.index(c): i for i, members in enumerate(CLUSTERS.values()) for c in members}
    assert all(owner[p] == r for p, r in zip(pred, route))
    for i in range(len(x)):
        cluster = list(CLUSTERS)[route[i]]
        members = CLUSTERS[cluster]
        if len(members) > 1:
            assert NAMES[pred[i]] == members[fine[cluster].predict(x[i:i + 1])[0]]
        else:
            assert NAMES[pred[i]] == members[0]
    assert hybrid.coarse_to_fine_predict(coarse, fine, x[0], CLUSTERS, NAMES) == pred[0]


def test_cluster_validation():
    with pytest.raises(ConfigurationError):
        hybrid.validate_clusters({"A": ["x", "y"], "B": ["y"]}, ["x", "y"])
    with pytest.raises(ConfigurationError):
        hybrid.validate_clusters({"A": ["x"]}, ["x", "y"])
    with pytest.raises(ConfigurationError):
        hybrid.validate_clusters({"A": ["x", "y", "z"]}, ["x", "y"])
    coarse, fine = c2f_models()
    with pytest.raises(ConfigurationError):
        hybrid.CoarseToFine(coarse, {"A": fine["A"], "C": None}, CLUSTERS, NAMES)
    with pytest.raises(ConfigurationError):
        hybrid.CoarseToFine(tiny(n_classes=2), fine, CLUSTERS, NAMES)


def test_default_clusters_partition_eurosat():
    hybrid.validate_clusters(hybrid.DEFAULT_CLUSTERS, hybrid.EUROSAT_CLASSES)
    assert list(hybrid.DEFAULT_CLUSTERS) == ["Vegetation", "Urban", "WaterBodies"]
