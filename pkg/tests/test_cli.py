import csv

import numpy as np
import pytest
import yaml

from hqnn import cli, datasets
from hqnn.hybrid import EUROSAT_CLASSES

TINY_CNN = [
    {"kind": "conv2d", "out_channels": 2, "kernel": 3},
    {"kind": "tanh"},
    {"kind": "maxpool2d"},
    {"kind": "flatten"},
    {"kind": "dense", "units": 8},
    {"kind": "tanh"},
]


def write_config(tmp_path, out="run", **sections):
    raw = {
        "seed": 1,
        "output_dir": str(tmp_path / out),
        "dataset": {"kind": "synthetic", "n_classes": 3, "n_per_class": 5, "image_size": 8},
        "model": {"kind": "real_amplitudes", "cnn": TINY_CNN},
        "train": {"epochs": 2, "lr": 0.01, "batch_size": 4},
    }
    for key, val in sections.items():
        raw[key].update(val) if isinstance(raw.get(key), dict) else raw.__setitem__(key, val)
    path = tmp_path / f"{out}.yaml"
    path.write_text(yaml.safe_dump(raw))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_train_writes_outputs(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["train", str(cfg)]) == 0
    out = tmp_path / "run"
    rows = read_csv(out / "history.csv")
    assert rows[0] == ["epoch", "train_loss", "train_acc", "val_acc"] and len(rows) == 3
    assert (out / "model.ckpt").read_bytes()[:4] == b"HQNN"
    assert "trained real_amplitudes" in capsys.readouterr().out


def test_train_is_deterministic(tmp_path):
    cfg = write_config(tmp_path)
    assert cli.main(["train", str(cfg), "--output-dir", str(tmp_path / "a")]) == 0
    assert cli.main(["train", str(cfg), "--output-dir", str(tmp_path / "b")]) == 0
    for name in ("history.csv", "model.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_config_errors(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert cli.main(["train", str(cfg), "--set", "model.kind=ghz"]) == 2
    assert "model.kind" in capsys.readouterr().err
    assert cli.main(["train", str(tmp_path / "nope.yaml")]) == 2


def test_train_dataset_error(tmp_path):
    (tmp_path / "empty").mkdir()
    cfg = write_config(tmp_path, dataset={"kind": "directory", "path": str(tmp_path / "empty")})
    assert cli.main(["train", str(cfg)]) == 3


def test_eval_writes_report(tmp_path):
    cfg = write_config(tmp_path)
    cli.main(["train", str(cfg)])
    out = tmp_path / "eval"
    assert cli.main(["eval", str(tmp_path / "run" / "model.ckpt"), "--config", str(cfg), "--output-dir", str(out)]) == 0
    rows = read_csv(out / "report.csv")
    assert len(rows) == 1 + 3 + 3
    cm = read_csv(out / "confusion_matrix.csv")
    assert sum(int(v) for r in cm[1:] for v in r[1:]) == 3
    header = (out / "report.txt").read_text().splitlines()[0]
    assert header.index("Precision") < header.index("Recall") < header.index("F1 Score")


def test_eval_ten_classes_from_directory(tmp_path):
    data = datasets.synthetic_generate(10, 2, 64, seed=0, class_names=EUROSAT_CLASSES)
    datasets.export_directory(data, tmp_path / "imgs")
    cfg = write_config(tmp_path, dataset={"n_classes": 10, "n_per_class": 2, "image_size": 64,
                                          "class_names": list(EUROSAT_CLASSES)}, train={"epochs": 1})
    cli.main(["train", str(cfg)])
    out = tmp_path / "eval"
    code = cli.main(["eval", str(tmp_path / "run" / "model.ckpt"), "--data", str(tmp_path / "imgs"),
                     "--split", "all", "--output-dir", str(out)])
    assert code == 0
    rows = read_csv(out / "report.csv")
    assert [r[0] for r in rows[1:11]] == sorted(EUROSAT_CLASSES)


def test_eval_class_count_mismatch(tmp_path):
    cfg = write_config(tmp_path)
    cli.main(["train", str(cfg)])
    other = write_config(tmp_path, out="other", dataset={"n_classes": 4})
    code = cli.main(["eval", str(tmp_path / "run" / "model.ckpt"), "--config", str(other),
                     "--output-dir", str(tmp_path / "e")])
    assert code == 4


def test_eval_bad_checkpoint(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    assert cli.main(["eval", str(bad), "--data", str(tmp_path)]) == 4


def test_eval_empty_dataset(tmp_path):
    cfg = write_config(tmp_path)
    cli.main(["train", str(cfg)])
    (tmp_path / "empty" / "x").mkdir(parents=True)
    with pytest.warns(UserWarning):
        code = cli.main(["eval", str(tmp_path / "run" / "model.ckpt"), "--data", str(tmp_path / "empty")])
    assert code == 3


def test_predict(tmp_path, capsys):
    data = datasets.synthetic_generate(3, 2, 64, seed=0)
    datasets.export_directory(data, tmp_path / "imgs")
    cfg = write_config(tmp_path, dataset={"image_size": 64}, train={"epochs": 1})
    cli.main(["train", str(cfg)])
    capsys.readouterr()
    img = sorted((tmp_path / "imgs" / "class_0").iterdir())[0]
    assert cli.main(["predict", str(tmp_path / "run" / "model.ckpt"), str(img)]) == 0
    name, prob = capsys.readouterr().out.split()
    assert name in data.class_names and 0 < float(prob) <= 1
    assert cli.main(["predict", str(tmp_path / "run" / "model.ckpt"), str(tmp_path / "missing.png")]) == 3


@pytest.mark.parametrize("name,n_checks", [("no_entanglement", 2), ("bellman", 2), ("real_amplitudes", 2)])
def test_circuit_diag(name, n_checks, capsys):
    assert cli.main(["circuit-diag", name]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == n_checks and all(line.startswith("PASS") for line in lines)


def test_circuit_diag_unknown():
    assert cli.main(["circuit-diag", "ghz"]) == 2


def c2f_config(tmp_path, **clusters):
    return write_config(
        tmp_path, out="c2f",
        dataset={"n_classes": 10, "n_per_class": 4, "class_names": list(EUROSAT_CLASSES)},
        train={"epochs": 1},
        **({"coarse2fine": clusters} if clusters else {}),
    )


def test_coarse2fine_reports(tmp_path):
    cfg = c2f_config(tmp_path)
    assert cli.main(["coarse2fine", str(cfg)]) == 0
    out = tmp_path / "c2f"
    coarse = read_csv(out / "coarse_report.csv")
    assert [r[0] for r in coarse[1:]] == ["Vegetation", "Urban", "WaterBodies", "accuracy", "macro avg", "weighted avg"]
    composite = read_csv(out / "composite_report.csv")
    assert len(composite) == 1 + 10 + 3
    for name in ("Vegetation", "Urban", "WaterBodies"):
        assert (out / f"fine_{name}.ckpt").exists() and (out / f"fine_{name}_report.csv").exists()
    # reuse the trained checkpoints instead of retraining
    reuse = c2f_config(tmp_path, coarse_checkpoint=str(out / "coarse.ckpt"),
                       fine_checkpoints={n: str(out / f"fine_{n}.ckpt") for n in ("Vegetation", "Urban", "WaterBodies")})
    before = (out / "composite_report.csv").read_bytes()
    assert cli.main(["coarse2fine", str(reuse)]) == 0
    assert (out / "composite_report.csv").read_bytes() == before


def test_coarse2fine_bad_clusters(tmp_path):
    cfg = c2f_config(tmp_path, clusters={"A": list(EUROSAT_CLASSES[:5]), "B": list(EUROSAT_CLASSES[4:])})
    assert cli.main(["coarse2fine", str(cfg)]) == 2


def test_history_values_parse(tmp_path):
    cfg = write_config(tmp_path)
    cli.main(["train", str(cfg)])
    rows = read_csv(tmp_path / "run" / "history.csv")[1:]
    vals = np.array([[float(v) for v in r] for r in rows])
    assert np.all((vals[:, 2:] >= 0) & (vals[:, 2:] <= 1))
