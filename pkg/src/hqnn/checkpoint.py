"""Binary model checkpoints.

Layout (little-endian)::

    b"HQNN" | u32 version | u32 header_len | header (UTF-8 JSON) | float64 blocks

The JSON header holds the model topology, the ordered list of arrays
(name + shape) and free-form training metadata. Array data follows in the
header's order with no padding.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import CheckpointFormatError, CheckpointVersionError
from .hybrid import HybridModel

MAGIC = b"HQNN"
VERSION = 1
_PREFIX = struct.Struct("<4sII")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dumps(model: HybridModel, metadata: dict | None = None) -> bytes:
    arrays = model.state_arrays()
    names = list(arrays)
    header = {
        "topology": model.topology(),
        "arrays": [{"name": n, "shape": list(arrays[n].shape)} for n in names],
        "metadata": metadata or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blocks = b"".join(np.ascontiguousarray(arrays[n], dtype="<f8").tobytes() for n in names)
    return _PREFIX.pack(MAGIC, VERSION, len(head)) + head + blocks


def loads(data: bytes) -> tuple[HybridModel, dict]:
    """Rebuild a model from checkpoint bytes; returns ``(model, metadata)``."""
    if len(data) < _PREFIX.size:
        raise CheckpointFormatError("checkpoint truncated before header")
    magic, version, head_len = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointFormatError(f"bad magic {magic!r}; not an HQNN checkpoint")
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, this build reads version {VERSION}")
    start = _PREFIX.size
    if len(data) < start + head_len:
        raise CheckpointFormatError("checkpoint truncated inside header")
    try:
        header = json.loads(data[start:start + head_len].decode("utf-8"))
        topo = header["topology"]
        layout = header["arrays"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointFormatError(f"corrupt checkpoint header: {exc}") from exc

    model = HybridModel.from_topology(topo)
    arrays = model.state_arrays()
    offset = start + head_len
    for entry in layout:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in arrays or arrays[name].shape != shape:
            raise CheckpointFormatError(f"array {name} {shape} does not match the model topology")
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if len(data) < offset + nbytes:
            raise CheckpointFormatError(f"checkpoint truncated in array {name}")
        np.copyto(arrays[name], np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape))
        offset += nbytes
    if {e["name"] for e in layout} != set(arrays):
        raise CheckpointFormatError("checkpoint is missing model arrays")
    if offset != len(data):
        raise CheckpointFormatError(f"{len(data) - offset} trailing bytes after the last array")
    return model, header.get("metadata", {})


def save_checkpoint(model: HybridModel, path, metadata: dict | None = None) -> None:
    atomic_write_bytes(path, dumps(model, metadata))


def load_checkpoint(path) -> tuple[HybridModel, dict]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(data)
