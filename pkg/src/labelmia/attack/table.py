"""Attack dataset tables: CSV with a schema comment line."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from labelmia.attack.features import SCHEMA_VERSION, feature_names, records_to_arrays
from labelmia.errors import FormatError
from labelmia.io import atomic_write_text


def format_float(x) -> str:
    return repr(float(x))


def write_attack_table(path, node_ids, membership, X, rate_set):
    names = feature_names(rate_set)
    if X.shape[1] != len(names):
        raise FormatError(f"feature matrix has {X.shape[1]} columns, schema has {len(names)}", path)
    lines = [f"# schema={SCHEMA_VERSION} rates={','.join(str(float(r)) for r in rate_set)}",
             ",".join(["node", "membership", *names])]
    for v, m, row in zip(node_ids, membership, X):
        lines.append(",".join([str(int(v)), str(int(m)), *map(format_float, row)]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_records(path, records, rate_set):
    X, y, nodes = records_to_arrays(records)
    write_attack_table(path, nodes, y, X, rate_set)


def read_attack_table(path):
    """Returns ``(node_ids, membership, X, rate_set)``."""
    path = Path(path)
    if not path.is_file():
        raise FormatError("attack table not found", path)
    lines = path.read_text().splitlines()
    if len(lines) < 2 or not lines[0].startswith("# schema="):
        raise FormatError("missing schema line", path, 1)
    meta = dict(part.split("=", 1) for part in lines[0][2:].split())
    if meta.get("schema") != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema {meta.get('schema')!r}", path, 1)
    try:
        rate_set = tuple(float(r) for r in meta["rates"].split(","))
    except (KeyError, ValueError):
        raise FormatError("bad rates field", path, 1) from None
    header = lines[1].split(",")
    expected = ["node", "membership", *feature_names(rate_set)]
    if header != expected:
        raise FormatError("column header does not match the schema", path, 2)
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(expected):
            raise FormatError(f"expected {len(expected)} fields, got {len(parts)}", path, lineno)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise FormatError("non-numeric field", path, lineno) from None
    data = np.asarray(rows, dtype=np.float64).reshape(-1, len(expected))
    return data[:, 0].astype(np.int64), data[:, 1].astype(np.int64), data[:, 2:], rate_set
