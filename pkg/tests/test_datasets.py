import io
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from hqnn import config, datasets, pipeline
from hqnn.datasets import DatasetManifest
from hqnn.errors import ConfigurationError, DatasetError
from hqnn.hybrid import DEFAULT_CLUSTERS, EUROSAT_CLASSES


def png_bytes(color, size=(64, 64), fmt="PNG"):
    buf = io.BytesIO()
    Image.new("RGB", size, color).save(buf, fmt)
    return buf.getvalue()


def manifest(counts):
    items = [(f"c{c}/img{i:03d}.png", c) for c, n in enumerate(counts) for i in range(n)]
    return DatasetManifest([f"c{c}" for c in range(len(counts))], items)


def linear_probe_accuracy(train, val, n_classes, steps=300, lr=0.5):
    """Softmax regression on raw pixels, full-batch gradient descent."""
    x_tr = train.images.reshape(len(train), -1)
    mu, sd = x_tr.mean(0), x_tr.std(0) + 1e-8
    x_tr = (x_tr - mu) / sd
    x_va = (val.images.reshape(len(val), -1) - mu) / sd
    w = np.zeros((x_tr.shape[1], n_classes))
    b = np.zeros(n_classes)
    onehot = np.eye(n_classes)[train.labels]
    for _ in range(steps):
        z = x_tr @ w + b
        p = np.exp(z - z.max(1, keepdims=True))
        p /= p.sum(1, keepdims=True)
        g = (p - onehot) / len(x_tr)
        w -= lr * (x_tr.T @ g + 1e-3 * w)
        b -= lr * g.sum(0)
    return float(np.mean(np.argmax(x_va @ w + b, 1) == val.labels))


def write_tree(root, spec):
    for cls, n in spec.items():
        d = root / cls
        d.mkdir(parents=True)
        for i in range(n):
            (d / f"{i:03d}.png").write_bytes(png_bytes((10 * i, 0, 0)))


def test_load_directory(tmp_path):
    write_tree(tmp_path, {c: 2 for c in reversed(EUROSAT_CLASSES)})
    m = datasets.load_directory(tmp_path)
    assert m.class_names == sorted(EUROSAT_CLASSES) and len(m) == 20
    assert m.items == datasets.load_directory(tmp_path).items
    assert [p for p, _ in m.items] == sorted(p for p, _ in m.items)


def test_load_directory_skips_empty_class(tmp_path):
    write_tree(tmp_path, {"a": 2, "b": 2})
    (tmp_path / "empty").mkdir()
    with pytest.warns(UserWarning):
        m = datasets.load_directory(tmp_path)
    assert m.class_names == ["a", "b"]


def test_load_directory_empty_root(tmp_path):
    with pytest.raises(DatasetError):
        datasets.load_directory(tmp_path)


def test_load_csv_manifest(tmp_path):
    write_tree(tmp_path, {"x": 2, "y": 2})
    (tmp_path / "m.csv").write_text("path,label\nx/000.png,x\ny/001.png,y\ny/000.png,y\n")
    m = datasets.load_csv_manifest(tmp_path / "m.csv")
    assert m.class_names == ["x", "y"] and m.labels.tolist() == [0, 1, 1]
    assert len(datasets.load_images(m, 64)) == 3


def test_manifest_rejects_duplicates():
    with pytest.raises(DatasetError):
        DatasetManifest(["a"], [("p", 0), ("p", 0)])


def test_split_examples():
    tr, va = datasets.split(manifest([100] * 3), 0.8, seed=1)
    assert np.bincount(tr.labels).tolist() == [80] * 3
    assert np.bincount(va.labels).tolist() == [20] * 3
    tr, va = datasets.split(manifest([2, 2]), 0.5, seed=0)
    assert np.bincount(tr.labels).tolist() == [1, 1] and np.bincount(va.labels).tolist() == [1, 1]


def test_split_errors():
    with pytest.raises(DatasetError):
        datasets.split(manifest([5, 1]), 0.8)
    with pytest.raises(ValueError):
        datasets.split(manifest([5, 5]), 1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(2, 40), min_size=1, max_size=6), st.floats(0.05, 0.95), st.integers(0, 2**31))
def test_split_properties(counts, frac, seed):
    m = manifest(counts)
    tr, va = datasets.split(m, frac, seed)
    tp, vp = {p for p, _ in tr.items}, {p for p, _ in va.items}
    assert not tp & vp and tp | vp == {p for p, _ in m.items}
    for c, n in enumerate(counts):
        assert abs(int(np.sum(tr.labels == c)) - frac * n) <= 1
    tr2, _ = datasets.split(m, frac, seed)
    assert tr2.items == tr.items


def test_to_tensor_colors_and_resize():
    white = datasets.to_tensor(png_bytes((255, 255, 255)))
    assert white.shape == (3, 64, 64) and np.all(white == 1.0)
    assert np.all(datasets.to_tensor(png_bytes((0, 0, 0))) == 0.0)
    assert datasets.to_tensor(png_bytes((0, 128, 255), (128, 128))).shape == (3, 64, 64)
    assert datasets.to_tensor(png_bytes((9, 9, 9), (100, 80), "JPEG")).shape == (3, 64, 64)


def test_to_tensor_errors():
    with pytest.raises(DatasetError):
        datasets.to_tensor(b"not an image")
    with pytest.raises(DatasetError):
        datasets.to_tensor(png_bytes((0, 0, 0), (32, 32)))


def test_load_images_thread_cap(tmp_path, monkeypatch):
    write_tree(tmp_path, {"a": 3, "b": 3})
    m = datasets.load_directory(tmp_path)
    monkeypatch.setenv("HQNN_THREADS", "1")
    one = datasets.load_images(m)
    monkeypatch.setenv("HQNN_THREADS", "4")
    four = datasets.load_images(m)
    assert np.array_equal(one.images, four.images)
    assert one.images.min() >= 0 and one.images.max() <= 1


def test_cluster_relabel():
    m = DatasetManifest(list(EUROSAT_CLASSES), [(f"{c}.jpg", i) for i, c in enumerate(EUROSAT_CLASSES)])
    coarse = datasets.relabel_clusters(m, DEFAULT_CLUSTERS)
    assert coarse.class_names == ["Vegetation", "Urban", "WaterBodies"]
    lab = dict((p, coarse.class_names[lab]) for p, lab in coarse.items)
    assert lab["Forest.jpg"] == "Vegetation" and lab["Highway.jpg"] == "Urban" and lab["SeaLake.jpg"] == "WaterBodies"
    assert [p for p, _ in coarse.items] == [p for p, _ in m.items]
    members = [c for group in DEFAULT_CLUSTERS.values() for c in group]
    assert sorted(members) == sorted(EUROSAT_CLASSES)


def test_cluster_relabel_unmapped():
    m = manifest([2, 2])
    with pytest.raises(ConfigurationError):
        datasets.relabel_clusters(m, {"only": ["c0"]})


def test_cluster_subset_relabels_to_member_order():
    data = datasets.synthetic_generate(10, 3, 8, seed=1, class_names=EUROSAT_CLASSES)
    sub = datasets.cluster_subset(data, DEFAULT_CLUSTERS, "WaterBodies")
    assert sub.class_names == ["River", "SeaLake"] and len(sub) == 6
    assert sorted(set(sub.labels.tolist())) == [0, 1]


def test_synthetic_generate():
    a = datasets.synthetic_generate(4, 50, 16, seed=7)
    assert a.images.shape == (200, 3, 16, 16)
    assert np.bincount(a.labels).tolist() == [50] * 4
    assert a.images.min() >= 0 and a.images.max() <= 1
    b = datasets.synthetic_generate(4, 50, 16, seed=7)
    assert a.images.tobytes() == b.images.tobytes()
    assert datasets.synthetic_generate(4, 50, 16, seed=8).images.tobytes() != a.images.tobytes()
    with pytest.raises(ValueError):
        datasets.synthetic_generate(1, 5)


def test_synthetic_not_linearly_separable():
    data = datasets.synthetic_generate(4, 50, 16, seed=7)
    tr, va = datasets.split_indices(data.labels, 0.8, 7)
    assert linear_probe_accuracy(data.subset(tr), data.subset(va), 4) < 0.9


def test_export_round_trip(tmp_path):
    data = datasets.synthetic_generate(3, 4, 64, seed=2)
    datasets.export_directory(data, tmp_path)
    back = datasets.load_images(datasets.load_directory(tmp_path), 64)
    assert back.class_names == data.class_names
    assert np.array_equal(np.sort(back.labels), np.sort(data.labels))
    assert np.max(np.abs(np.sort(back.images.ravel()) - np.sort(data.images.ravel()))) <= 0.5 / 255 + 1e-12


def test_hybrid_beats_linear_probe():
    # the synthetic task should need the CNN: a trained hybrid model must beat the raw-pixel probe
    cfg = config.load(Path(__file__).resolve().parent.parent / "configs" / "desk_synthetic.yaml")
    train_set, val_set = pipeline.load_splits(cfg)
    model, _ = pipeline.fit(cfg, train_set, val_set)
    preds, _ = pipeline.predict_set(model, val_set)
    hybrid_acc = float(np.mean(preds == val_set.labels))
    assert hybrid_acc > linear_probe_accuracy(train_set, val_set, 4) + 0.05
