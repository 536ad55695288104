"""Model checkpoints: ``manifest.json`` plus a little-endian float64 blob."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from labelmia.errors import FormatError
from labelmia.gnn.model import GnnConfig
from labelmia.gnn.training import TrainedGnn, init_model
from labelmia.io import atomic_write_bytes, atomic_write_text

FORMAT = "labelmia-checkpoint/1"


def save_checkpoint(model: TrainedGnn, path) -> Path:
    path = Path(path)
    os.makedirs(path, exist_ok=True)
    tensors, blobs, offset = [], [], 0
    for name, arr in model.state_arrays():
        arr = np.asarray(arr)
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset,
                        "count": int(arr.size)})
        blobs.append(arr.astype("<f8").tobytes())
        offset += arr.size
    manifest = {
        "format": FORMAT,
        "config": model.config.to_dict(),
        "in_dim": model.in_dim,
        "num_classes": model.num_classes,
        "train_acc": model.train_acc,
        "test_acc": model.test_acc,
        "tensors": tensors,
    }
    atomic_write_bytes(path / "params.bin", b"".join(blobs))
    atomic_write_text(path / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> TrainedGnn:
    path = Path(path)
    manifest_path = path / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text())
    except FileNotFoundError as exc:
        raise FormatError("missing checkpoint manifest", manifest_path) from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}", manifest_path, exc.lineno) from exc
    if manifest.get("format") != FORMAT:
        raise FormatError(f"unsupported checkpoint format {manifest.get('format')!r}", manifest_path)
    blob_path = path / "params.bin"
    try:
        flat = np.frombuffer(blob_path.read_bytes(), dtype="<f8")
    except FileNotFoundError as exc:
        raise FormatError("missing parameter blob", blob_path) from exc
    expected = sum(t["count"] for t in manifest["tensors"])
    if flat.size != expected:
        raise FormatError(f"expected {8 * expected} bytes, found {8 * flat.size}", blob_path)
    config = GnnConfig.from_dict(manifest["config"])
    gnn = init_model(config, manifest["in_dim"], manifest["num_classes"])
    arrays = {t["name"]: flat[t["offset"]:t["offset"] + t["count"]].reshape(t["shape"])
              for t in manifest["tensors"]}
    gnn.load_state_arrays(arrays)
    gnn.eval()
    return TrainedGnn(config, gnn, manifest["train_acc"], manifest["test_acc"])
