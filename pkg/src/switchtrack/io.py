"""On-disk formats.

Matrices are CSV files whose first line is ``# rows cols``, followed by the rows
in decimal with 17 significant digits (lossless for float64). A dataset is a
directory holding those CSVs plus ``manifest.json``, which binds them together.
"""
from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError
from .sem import CascadeSnapshot, Dataset, StatePair, SwitchSequence

MANIFEST_NAME = "manifest.json"
DATASET_FORMAT = "switchtrack-dataset"
DATASET_VERSION = 1


def format_float(v: float) -> str:
    return "%.17g" % v


def write_matrix_csv(path, m) -> None:
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise ValueError(f"can only write 1-D or 2-D arrays, got shape {m.shape}")
    rows, cols = m.shape
    lines = [f"# {rows} {cols}"]
    lines.extend(",".join(format_float(v) for v in row) for row in m)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline()
        parts = header.lstrip("#").split()
        if not header.startswith("#") or len(parts) != 2:
            raise ParseError(f"{path}: expected '# rows cols' header", line=1)
        try:
            rows, cols = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"{path}: bad header {header.strip()!r}", line=1) from None
        data = np.empty((rows, cols))
        for r in range(rows):
            line = fh.readline()
            try:
                vals = [float(v) for v in line.strip().split(",")] if cols else []
            except ValueError:
                raise ParseError(f"{path}: non-numeric entry", line=r + 2) from None
            if len(vals) != cols:
                raise ParseError(f"{path}: expected {cols} values, got {len(vals)}", line=r + 2)
            data[r] = vals
        if fh.readline().strip():
            raise ParseError(f"{path}: more than {rows} data rows", line=rows + 2)
    return data


def read_vector_csv(path) -> np.ndarray:
    return read_matrix_csv(path).reshape(-1)


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", line=exc.lineno) from None


def write_states(directory, states, prefix="") -> list[dict]:
    """Write ``A_<s>.csv`` / ``b_<s>.csv`` per state; returns manifest entries."""
    directory = Path(directory)
    entries = []
    for pair in states:
        a_name = f"{prefix}A_{pair.state_id}.csv"
        b_name = f"{prefix}b_{pair.state_id}.csv"
        write_matrix_csv(directory / a_name, pair.a)
        write_matrix_csv(directory / b_name, pair.b)
        entries.append({"state_id": pair.state_id, "a": a_name, "b": b_name})
    return entries


def read_states(directory, entries) -> list[StatePair]:
    directory = Path(directory)
    return [
        StatePair(read_matrix_csv(directory / e["a"]), read_vector_csv(directory / e["b"]), int(e["state_id"]))
        for e in entries
    ]


def write_sigma(path, sigma) -> None:
    sigma = np.asarray(sigma, dtype=np.int64)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("t,state\n")
        fh.writelines(f"{t},{s}\n" for t, s in enumerate(sigma, start=1))


def read_sigma(path, n_states=None) -> SwitchSequence:
    values = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "t,state":
            raise ParseError(f"{path}: expected header 't,state'", line=1)
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                t, s = (int(v) for v in line.split(","))
            except ValueError:
                raise ParseError(f"{path}: malformed row {line.strip()!r}", line=lineno) from None
            if t != len(values) + 1:
                raise ParseError(f"{path}: intervals must be consecutive from 1", line=lineno)
            values.append(s)
    sigma = np.asarray(values, dtype=np.int64)
    return SwitchSequence(sigma, n_states or (int(sigma.max()) if sigma.size else 1))


def save_dataset(directory, dataset: Dataset) -> Path:
    """Write a dataset directory and return the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(directory / "X.csv", dataset.X)
    snaps = []
    width = max(4, len(str(len(dataset.snapshots))))
    for k, snap in enumerate(dataset.snapshots, start=1):
        t = getattr(snap, "t", k)
        name = f"Y/Y_{t:0{width}d}.csv"
        write_matrix_csv(directory / name, np.asarray(snap))
        snaps.append(name)
    manifest = {
        "format": DATASET_FORMAT,
        "version": DATASET_VERSION,
        "n_nodes": int(dataset.X.shape[0]),
        "n_cascades": int(dataset.X.shape[1]),
        "n_intervals": len(snaps),
        "x": "X.csv",
        "snapshots": snaps,
        "states": None,
        "sigma": None,
        "n_states": None,
        "config": dataset.config,
        "id_maps": None,
    }
    if dataset.states is not None:
        manifest["states"] = write_states(directory / "states", dataset.states)
        manifest["states"] = [
            {**e, "a": f"states/{e['a']}", "b": f"states/{e['b']}"} for e in manifest["states"]
        ]
        manifest["n_states"] = len(dataset.states)
    if dataset.sigma is not None:
        write_sigma(directory / "sigma.csv", dataset.sigma)
        manifest["sigma"] = "sigma.csv"
        manifest["n_states"] = manifest["n_states"] or dataset.sigma.n_states
    if dataset.id_maps is not None:
        write_json(directory / "id_maps.json", dataset.id_maps)
        manifest["id_maps"] = "id_maps.json"
    path = directory / MANIFEST_NAME
    write_json(path, manifest)
    return path


def resolve_manifest(path) -> Path:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise ConfigError(f"manifest {path} does not exist")
    return path


def load_dataset(path) -> Dataset:
    path = resolve_manifest(path)
    root = path.parent
    manifest = read_json(path)
    if manifest.get("format") != DATASET_FORMAT:
        raise ParseError(f"{path}: not a {DATASET_FORMAT} manifest")
    X = read_matrix_csv(root / manifest["x"])
    snapshots = [CascadeSnapshot(read_matrix_csv(root / name), t) for t, name in enumerate(manifest["snapshots"], start=1)]
    states = read_states(root, manifest["states"]) if manifest.get("states") else None
    sigma = None
    if manifest.get("sigma"):
        sigma = read_sigma(root / manifest["sigma"], manifest.get("n_states"))
    id_maps = read_json(root / manifest["id_maps"]) if manifest.get("id_maps") else None
    return Dataset(X, snapshots, states, sigma, manifest.get("config"), id_maps)


def file_digest(path) -> str:
    import hashlib

    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def tree_digests(directory, suffixes=(".csv", ".json")) -> dict:
    """sha256 of every numeric output file under ``directory``, keyed by relative path."""
    directory = Path(directory)
    out = {}
    for root, _, files in os.walk(directory):
        for name in sorted(files):
            if name.endswith(suffixes):
                p = Path(root) / name
                out[str(p.relative_to(directory))] = file_digest(p)
    return dict(sorted(out.items()))
