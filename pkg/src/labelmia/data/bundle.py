"""On-disk graph bundles.

A bundle is a directory holding::

    manifest.json   {"version": 1, "num_nodes", "num_classes", "feature_dim",
                     "feature_encoding": "binary_f32" | "csv"}
    edges.tsv       src<TAB>dst per line (directed lists are symmetrized)
    labels.tsv      one class index per line
    features.bin    row-major little-endian float32, or
    features.csv    one comma-separated row per node
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from labelmia.errors import FormatError
from labelmia.graph import Graph
from labelmia.io import atomic_write_bytes, atomic_write_text

BUNDLE_VERSION = 1
ENCODINGS = ("binary_f32", "csv")


def save_bundle(graph: Graph, path, feature_encoding="binary_f32") -> Path:
    if feature_encoding not in ENCODINGS:
        raise FormatError(f"feature_encoding must be one of {ENCODINGS}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": BUNDLE_VERSION,
        "num_nodes": graph.num_nodes,
        "num_classes": graph.num_classes,
        "feature_dim": graph.feature_dim,
        "feature_encoding": feature_encoding,
    }
    src, dst = graph.edge_index()
    atomic_write_text(path / "edges.tsv", "".join(f"{u}\t{v}\n" for u, v in zip(src, dst)))
    atomic_write_text(path / "labels.tsv", "".join(f"{y}\n" for y in graph.labels))
    if feature_encoding == "binary_f32":
        atomic_write_bytes(path / "features.bin", graph.features.astype("<f4").tobytes())
    else:
        rows = (",".join(repr(float(v)) for v in row) for row in graph.features)
        atomic_write_text(path / "features.csv", "".join(r + "\n" for r in rows))
    atomic_write_text(path / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _read_manifest(path: Path) -> dict:
    mpath = path / "manifest.json"
    if not mpath.is_file():
        raise FormatError("bundle manifest not found", mpath)
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", mpath, exc.lineno) from exc
    for key in ("version", "num_nodes", "num_classes", "feature_dim", "feature_encoding"):
        if key not in manifest:
            raise FormatError(f"missing key {key!r}", mpath)
    if manifest["version"] != BUNDLE_VERSION:
        raise FormatError(f"unsupported bundle version {manifest['version']!r}", mpath)
    if manifest["feature_encoding"] not in ENCODINGS:
        raise FormatError(f"unknown feature_encoding {manifest['feature_encoding']!r}", mpath)
    for key in ("num_nodes", "num_classes", "feature_dim"):
        if not isinstance(manifest[key], int) or manifest[key] < 0:
            raise FormatError(f"{key} must be a non-negative integer", mpath)
    return manifest


def _read_int_table(fpath: Path, ncols: int):
    if not fpath.is_file():
        raise FormatError("file not found", fpath)
    rows = []
    with fpath.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t") if ncols > 1 else [line]
            if len(parts) != ncols:
                raise FormatError(f"expected {ncols} columns, got {len(parts)}", fpath, lineno)
            try:
                rows.append([int(p) for p in parts] + [lineno])
            except ValueError:
                raise FormatError(f"non-integer field in {line!r}", fpath, lineno) from None
    return np.asarray(rows, dtype=np.int64).reshape(-1, ncols + 1)


def load_bundle(path) -> Graph:
    """Read a bundle directory, validating every index against the manifest."""
    path = Path(path)
    if not path.is_dir():
        raise FormatError("bundle directory not found", path)
    m = _read_manifest(path)
    n, c, d = m["num_nodes"], m["num_classes"], m["feature_dim"]

    edges = _read_int_table(path / "edges.tsv", 2)
    bad = np.flatnonzero((edges[:, :2] < 0).any(axis=1) | (edges[:, :2] >= n).any(axis=1))
    if len(bad):
        raise FormatError(f"node index out of range [0, {n})", path / "edges.tsv", int(edges[bad[0], 2]))

    labels = _read_int_table(path / "labels.tsv", 1)
    if len(labels) != n:
        raise FormatError(f"expected {n} labels, found {len(labels)}", path / "labels.tsv")
    bad = np.flatnonzero((labels[:, 0] < 0) | (labels[:, 0] >= c))
    if len(bad):
        raise FormatError(f"label out of range [0, {c})", path / "labels.tsv", int(labels[bad[0], 1]))

    if m["feature_encoding"] == "binary_f32":
        fpath = path / "features.bin"
        if not fpath.is_file():
            raise FormatError("file not found", fpath)
        raw = fpath.read_bytes()
        expected = 4 * n * d
        if len(raw) != expected:
            raise FormatError(f"expected {expected} bytes, found {len(raw)}", fpath)
        features = np.frombuffer(raw, dtype="<f4").reshape(n, d).astype(np.float32)
    else:
        features = _read_csv_features(path / "features.csv", n, d)
    return Graph.from_edges(features, labels[:, 0], edges[:, :2], num_classes=c)


def _read_csv_features(fpath: Path, n: int, d: int) -> np.ndarray:
    if not fpath.is_file():
        raise FormatError("file not found", fpath)
    out = np.empty((n, d), dtype=np.float64)
    row = 0
    with fpath.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if row >= n:
                raise FormatError(f"more than {n} feature rows", fpath, lineno)
            parts = line.split(",")
            if len(parts) != d:
                raise FormatError(f"expected {d} values, got {len(parts)}", fpath, lineno)
            try:
                out[row] = [float(p) for p in parts]
            except ValueError:
                raise FormatError("non-numeric feature value", fpath, lineno) from None
            row += 1
    if row != n:
        raise FormatError(f"expected {n} feature rows, found {row}", fpath)
    return out
