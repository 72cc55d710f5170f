"""Checkpoint format: ``manifest.json`` + ``weights.bin``.

The manifest lists every tensor with its name, shape, dtype, byte offset
and byte length inside the blob; the blob is the raw little-endian tensor
data concatenated in manifest order.  Extra metadata (model config, step,
vocabulary) lives under ``"meta"``.  Writing is deterministic, so identical
weights give byte-identical files.
"""
import json
import os
from pathlib import Path

import numpy as np

MANIFEST = "manifest.json"
BLOB = "weights.bin"
FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


def _atomic_write(path: Path, payload: bytes):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def save_arrays(directory, arrays: dict, meta=None, dtype="<f4"):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes()
        entries.append(
            {"name": name, "shape": list(arr.shape), "dtype": np.dtype(dtype).str, "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    manifest = {"format": FORMAT_VERSION, "tensors": entries, "meta": meta or {}}
    _atomic_write(directory / BLOB, b"".join(chunks))
    _atomic_write(directory / MANIFEST, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())


def load_arrays(directory):
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST).read_text())
        blob = (directory / BLOB).read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f"incomplete checkpoint in {directory}: {exc}") from exc
    if manifest.get("format") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format')!r}")
    arrays = {}
    for e in manifest["tensors"]:
        end = e["offset"] + e["nbytes"]
        if end > len(blob):
            raise CheckpointError(f"tensor {e['name']} extends past end of blob")
        arr = np.frombuffer(blob[e["offset"] : end], dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        arrays[e["name"]] = arr.copy()
    return arrays, manifest["meta"]


def save_model(directory, model, meta=None):
    full = {"model_config": model.config.to_dict()}
    full.update(meta or {})
    dtype = "<f8" if model.dtype == np.float64 else "<f4"
    save_arrays(directory, model.state_arrays(), full, dtype=dtype)


def load_model(directory, dtype=None):
    from .config import ModelConfig
    from .transformer import Model

    arrays, meta = load_arrays(directory)
    config = ModelConfig.from_dict(meta["model_config"])
    first = next(iter(arrays.values()))
    model = Model(config, dtype=dtype or first.dtype)
    model.load_arrays(arrays)
    return model, meta
