"""Ingestion of timestamped cascade logs into snapshots and susceptibilities.

Events are ``(node_id, cascade_id, timestamp)`` triples with timestamps in
Unix hours. The observation span is cut into T equal intervals; within each,
an infection time becomes ``log10(u - u_min + offset)`` and a missing one gets
the constant ``2 + log10(max u)``.
"""
from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, InvalidInputError, ParseError
from .sem import CascadeSnapshot, Dataset, ExogenousMatrix

logger = logging.getLogger(__name__)

FIELDS = ("node_id", "cascade_id", "timestamp")


@dataclass(frozen=True)
class CascadeEvent:
    node_id: str
    cascade_id: str
    timestamp: int

    def __post_init__(self):
        if self.timestamp < 0:
            raise InvalidInputError(f"negative timestamp {self.timestamp}")


@dataclass
class PreprocessConfig:
    n_intervals: int = 180
    min_infected: int = 100
    n_categories: int = 5
    category_map: dict = field(default_factory=dict)
    offset_hours: float = 1.0
    per_cascade_min: bool = False

    def __post_init__(self):
        if self.n_intervals < 1:
            raise ConfigError("n_intervals must be >= 1")
        if self.min_infected < 1:
            raise ConfigError("min_infected must be >= 1")
        if self.n_categories < 1:
            raise ConfigError("n_categories must be >= 1")
        if self.offset_hours < 0:
            raise ConfigError("offset_hours must be >= 0")

    def to_dict(self):
        return dict(n_intervals=self.n_intervals, min_infected=self.min_infected, n_categories=self.n_categories,
                    offset_hours=self.offset_hours, per_cascade_min=self.per_cascade_min)


def _parse_event(node, cascade, ts, line):
    if node in (None, "") or cascade in (None, ""):
        raise ParseError("missing node_id or cascade_id", line=line)
    try:
        value = float(ts)
    except (TypeError, ValueError):
        raise ParseError(f"bad timestamp {ts!r}", line=line) from None
    if value != int(value) or value < 0:
        raise ParseError(f"timestamp must be a non-negative integer, got {ts!r}", line=line)
    return CascadeEvent(str(node), str(cascade), int(value))


def _dedupe(events):
    first = {}
    for ev in events:
        key = (ev.node_id, ev.cascade_id)
        if key not in first or ev.timestamp < first[key].timestamp:
            first[key] = ev
    return list(first.values())


def load_events(path) -> list[CascadeEvent]:
    """Read a CSV (with header) or JSONL event log.

    Repeated ``(node, cascade)`` pairs keep their earliest timestamp.
    """
    path = Path(path)
    events = []
    if path.suffix.lower() in (".jsonl", ".ndjson", ".json"):
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ParseError(f"{path}: {exc.msg}", line=lineno) from None
                if not isinstance(rec, dict):
                    raise ParseError(f"{path}: expected an object", line=lineno)
                events.append(_parse_event(rec.get("node_id"), rec.get("cascade_id"), rec.get("timestamp"), lineno))
    else:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return []
            header = [h.strip() for h in header]
            if any(f not in header for f in FIELDS):
                raise ParseError(f"{path}: header must contain {', '.join(FIELDS)}", line=1)
            cols = [header.index(f) for f in FIELDS]
            for row in reader:
                lineno = reader.line_num
                if not row or not any(v.strip() for v in row):
                    continue
                if len(row) != len(header):
                    raise ParseError(f"{path}: expected {len(header)} fields, got {len(row)}", line=lineno)
                events.append(_parse_event(*(row[c].strip() for c in cols), lineno))
    return _dedupe(events)


def filter_memes(events, min_infected: int = 100):
    """Drop cascades reaching fewer than ``min_infected`` distinct nodes.

    Returns ``(events, n_nodes, n_cascades)`` for the survivors.
    """
    if min_infected < 1:
        raise InvalidInputError("min_infected must be >= 1")
    events = _dedupe(events)
    reach = Counter(ev.cascade_id for ev in events)
    kept = [ev for ev in events if reach[ev.cascade_id] >= min_infected]
    nodes, cascades = index_events(kept)
    logger.info("kept %d of %d cascades (%d nodes)", len(cascades), len(reach), len(nodes))
    return kept, len(nodes), len(cascades)


def index_events(events):
    """Dense 0-based indices for node and cascade ids, in order of first appearance."""
    nodes, cascades = {}, {}
    for ev in events:
        nodes.setdefault(ev.node_id, len(nodes))
        cascades.setdefault(ev.cascade_id, len(cascades))
    return nodes, cascades


def interval_index(timestamps, n_intervals: int):
    """Interval (0-based) of each timestamp; intervals are half-open, the last one closed."""
    u = np.asarray(timestamps, dtype=float)
    lo, hi = u.min(), u.max()
    if hi == lo:
        return np.zeros(u.size, dtype=np.int64)
    width = (hi - lo) / n_intervals
    return np.minimum(np.floor((u - lo) / width).astype(np.int64), n_intervals - 1)


def surrogate_value(events) -> float:
    """Stand-in for an infinite infection time: ``2 + log10(max u)``."""
    top = max(ev.timestamp for ev in events)
    return 2.0 + float(np.log10(max(top, 1)))


def build_snapshots(events, n_intervals: int, offset_hours: float = 1.0, per_cascade_min: bool = False,
                    node_index=None, cascade_index=None) -> list[CascadeSnapshot]:
    """One N x C snapshot per interval.

    With ``offset_hours = 0`` the raw logarithm is used, which is undefined for
    the earliest event of each interval and raises an error there.
    """
    events = list(events)
    if n_intervals < 1:
        raise InvalidInputError("n_intervals must be >= 1")
    if not events:
        raise DataError("no events to build snapshots from")
    if node_index is None or cascade_index is None:
        node_index, cascade_index = index_events(events)
    n, c = len(node_index), len(cascade_index)
    u = np.array([ev.timestamp for ev in events], dtype=float)
    rows = np.array([node_index[ev.node_id] for ev in events])
    cols = np.array([cascade_index[ev.cascade_id] for ev in events])
    k = interval_index(u, n_intervals)
    big = surrogate_value(events)
    Y = np.full((n_intervals, n, c), big)
    if per_cascade_min:
        mins = {}
        for kk, cc, uu in zip(k, cols, u):
            mins[(kk, cc)] = min(mins.get((kk, cc), uu), uu)
        base = np.array([mins[(kk, cc)] for kk, cc in zip(k, cols)])
    else:
        per_k = np.full(n_intervals, np.inf)
        np.minimum.at(per_k, k, u)
        base = per_k[k]
    shifted = u - base + offset_hours
    if np.any(shifted <= 0):
        raise DataError("log of zero at an interval minimum; use a positive offset")
    Y[k, rows, cols] = np.log10(shifted)
    return [CascadeSnapshot(Y[t], t + 1) for t in range(n_intervals)]


def build_susceptibility(events, category_map: dict, n_categories: int, node_index=None,
                         cascade_index=None) -> ExogenousMatrix:
    """``x_ic`` = share of node i's cascades that fall in cascade c's category.

    Nodes without any infection get the uniform share ``1 / n_categories``.
    Categories are numbered 1..n_categories.
    """
    events = list(events)
    if node_index is None or cascade_index is None:
        node_index, cascade_index = index_events(events)
    cat = np.zeros(len(cascade_index), dtype=np.int64)
    for cid, j in cascade_index.items():
        if cid not in category_map:
            raise InvalidInputError(f"cascade {cid!r} has no category")
        k = int(category_map[cid])
        if not 1 <= k <= n_categories:
            raise InvalidInputError(f"cascade {cid!r} has category {k} outside 1..{n_categories}")
        cat[j] = k - 1
    counts = np.zeros((len(node_index), n_categories))
    for ev in _dedupe(events):
        counts[node_index[ev.node_id], cat[cascade_index[ev.cascade_id]]] += 1
    totals = counts.sum(1, keepdims=True)
    gamma = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 1.0 / n_categories)
    return ExogenousMatrix(gamma[:, cat])


def load_category_map(path) -> dict:
    """``cascade_id -> category`` from JSON (an object) or CSV (``cascade_id,category``)."""
    path = Path(path)
    if path.suffix.lower() == ".json":
        from .io import read_json

        data = read_json(path)
        if not isinstance(data, dict):
            raise ParseError(f"{path}: expected a JSON object")
        return {str(k): int(v) for k, v in data.items()}
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["cascade_id", "category"]:
            raise ParseError(f"{path}: header must be cascade_id,category", line=1)
        for row in reader:
            if not row:
                continue
            try:
                out[row[0].strip()] = int(row[1])
            except (IndexError, ValueError):
                raise ParseError(f"{path}: malformed row", line=reader.line_num) from None
    return out


def preprocess(events, config: PreprocessConfig) -> Dataset:
    """Filter, index and transform an event log into a dataset."""
    kept, n, c = filter_memes(events, config.min_infected)
    if not kept:
        raise DataError(f"no cascade reaches {config.min_infected} nodes")
    node_index, cascade_index = index_events(kept)
    snapshots = build_snapshots(kept, config.n_intervals, config.offset_hours, config.per_cascade_min,
                                node_index, cascade_index)
    X = build_susceptibility(kept, config.category_map, config.n_categories, node_index, cascade_index)
    id_maps = {"nodes": list(node_index), "cascades": list(cascade_index)}
    meta = {**config.to_dict(), "surrogate": surrogate_value(kept)}
    return Dataset(X.x, snapshots, None, None, meta, id_maps)
