import json

import numpy as np
import pytest

from switchtrack.cascade_io import (
    CascadeEvent,
    PreprocessConfig,
    build_snapshots,
    build_susceptibility,
    filter_memes,
    interval_index,
    load_category_map,
    load_events,
    preprocess,
    surrogate_value,
)
from switchtrack.errors import ConfigError, DataError, InvalidInputError, ParseError

EVENTS = [
    CascadeEvent("a", "m1", 100),
    CascadeEvent("b", "m1", 199),
    CascadeEvent("a", "m2", 150),
    CascadeEvent("c", "m2", 300),
    CascadeEvent("c", "m1", 400),
]


def test_load_csv_and_jsonl_agree(tmp_path):
    csv_path = tmp_path / "ev.csv"
    csv_path.write_text("node_id,cascade_id,timestamp\n" + "".join(
        f"{e.node_id},{e.cascade_id},{e.timestamp}\n" for e in EVENTS))
    jl = tmp_path / "ev.jsonl"
    jl.write_text("".join(json.dumps(e.__dict__) + "\n" for e in EVENTS))
    assert load_events(csv_path) == load_events(jl) == EVENTS


def test_load_keeps_earliest_duplicate(tmp_path):
    p = tmp_path / "ev.csv"
    p.write_text("timestamp,node_id,cascade_id\n50,a,m\n10,a,m\n30,b,m\n")
    assert load_events(p) == [CascadeEvent("a", "m", 10), CascadeEvent("b", "m", 30)]


def test_load_empty(tmp_path):
    p = tmp_path / "ev.csv"
    p.write_text("")
    assert load_events(p) == []
    q = tmp_path / "ev.jsonl"
    q.write_text("\n")
    assert load_events(q) == []


@pytest.mark.parametrize("body,line", [
    ("node_id,cascade_id,timestamp\na,m,1\nb,m,xx\n", 3),
    ("node_id,cascade_id,timestamp\na,m,-4\n", 2),
    ("node_id,cascade_id,timestamp\na,m\n", 2),
    ("node,cascade,time\n", 1),
])
def test_parse_errors_report_line(tmp_path, body, line):
    p = tmp_path / "ev.csv"
    p.write_text(body)
    with pytest.raises(ParseError) as exc:
        load_events(p)
    assert exc.value.line == line


def test_jsonl_parse_error(tmp_path):
    p = tmp_path / "ev.jsonl"
    p.write_text('{"node_id": "a", "cascade_id": "m", "timestamp": 1}\n{oops\n')
    with pytest.raises(ParseError) as exc:
        load_events(p)
    assert exc.value.line == 2


def test_negative_timestamp_rejected():
    with pytest.raises(InvalidInputError):
        CascadeEvent("a", "m", -1)


def test_filter_memes():
    kept, n, c = filter_memes(EVENTS, 3)
    assert {e.cascade_id for e in kept} == {"m1"}
    assert (n, c) == (3, 1)
    assert filter_memes(EVENTS, 4) == ([], 0, 0)
    with pytest.raises(InvalidInputError):
        filter_memes(EVENTS, 0)


def test_interval_index_edges():
    np.testing.assert_array_equal(interval_index([0, 4, 5, 9, 10], 2), [0, 0, 1, 1, 1])
    np.testing.assert_array_equal(interval_index([3, 3], 4), [0, 0])


def test_snapshot_values():
    events = [CascadeEvent("a", "m", 0), CascadeEvent("b", "m", 99), CascadeEvent("a", "n", 50)]
    (Y,) = build_snapshots(events, 1)
    big = surrogate_value(events)
    assert big == pytest.approx(2 + np.log10(99))
    # rows a, b; columns m, n
    np.testing.assert_allclose(np.asarray(Y), [[0.0, np.log10(51)], [2.0, big]])
    assert big > np.asarray(Y)[np.asarray(Y) < big].max()


def test_snapshots_split_intervals():
    events = [CascadeEvent("a", "m", 0), CascadeEvent("b", "m", 10), CascadeEvent("a", "n", 20)]
    snaps = build_snapshots(events, 2)
    Y1, Y2 = (np.asarray(s) for s in snaps)
    big = surrogate_value(events)
    assert Y1[0, 0] == 0 and Y1[1, 0] == big
    # the second interval starts at its own minimum, t = 10
    assert Y2[1, 0] == 0 and Y2[0, 1] == pytest.approx(np.log10(11))


def test_per_cascade_minimum():
    events = [CascadeEvent("a", "m", 0), CascadeEvent("b", "n", 9), CascadeEvent("a", "n", 10)]
    (Y,) = build_snapshots(events, 1, per_cascade_min=True)
    assert np.asarray(Y)[1, 1] == 0 and np.asarray(Y)[0, 1] == pytest.approx(np.log10(2))


def test_raw_offset_hits_log_zero():
    with pytest.raises(DataError):
        build_snapshots(EVENTS, 2, offset_hours=0.0)
    with pytest.raises(DataError):
        build_snapshots([], 2)


def test_susceptibility_ratios():
    cats = {"m1": 1, "m2": 2}
    X = np.asarray(build_susceptibility(EVENTS, cats, 3))
    # a: one of each; b: only m1; c: one of each
    np.testing.assert_allclose(X, [[0.5, 0.5], [1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(InvalidInputError):
        build_susceptibility(EVENTS, {"m1": 1}, 3)
    with pytest.raises(InvalidInputError):
        build_susceptibility(EVENTS, {"m1": 1, "m2": 4}, 3)


def test_uninfected_node_gets_uniform_share():
    from switchtrack.cascade_io import index_events

    nodes, cascades = index_events(EVENTS)
    nodes = {**nodes, "z": len(nodes)}
    X = np.asarray(build_susceptibility(EVENTS, {"m1": 1, "m2": 2}, 4, nodes, cascades))
    np.testing.assert_allclose(X[-1], [0.25, 0.25])


def test_category_map_formats(tmp_path):
    j = tmp_path / "c.json"
    j.write_text('{"m1": 1, "m2": "2"}')
    c = tmp_path / "c.csv"
    c.write_text("cascade_id,category\nm1,1\nm2,2\n")
    assert load_category_map(j) == load_category_map(c) == {"m1": 1, "m2": 2}
    bad = tmp_path / "bad.csv"
    bad.write_text("cascade_id,category\nm1,x\n")
    with pytest.raises(ParseError):
        load_category_map(bad)


def test_preprocess_end_to_end():
    rng = np.random.default_rng(0)
    events = [CascadeEvent(f"n{i}", f"m{k}", int(rng.integers(0, 1000)))
              for k in range(4) for i in range(12) if rng.random() < 0.8 or k == 0]
    cfg = PreprocessConfig(n_intervals=3, min_infected=9, n_categories=2,
                           category_map={f"m{k}": k % 2 + 1 for k in range(4)})
    ds = preprocess(events, cfg)
    kept, n, c = filter_memes(events, 9)
    assert ds.X.shape == (n, c)
    assert len(ds.snapshots) == 3
    assert ds.id_maps["nodes"][0] == kept[0].node_id
    assert ds.states is None and ds.sigma is None
    with pytest.raises(DataError):
        preprocess(events, PreprocessConfig(min_infected=1000, category_map=cfg.category_map))


def test_preprocess_config_validation():
    with pytest.raises(ConfigError):
        PreprocessConfig(n_intervals=0)
    with pytest.raises(ConfigError):
        PreprocessConfig(offset_hours=-1)
