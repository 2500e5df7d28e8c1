import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from switchtrack.errors import ParseError
from switchtrack.io import (
    load_dataset,
    read_matrix_csv,
    read_sigma,
    read_states,
    save_dataset,
    tree_digests,
    write_matrix_csv,
    write_sigma,
    write_states,
)
from switchtrack.sem import GenerationConfig, StatePair, generate_dataset

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=6), elements=finite))
def test_matrix_csv_round_trip_is_lossless(tmp_path_factory, m):
    path = tmp_path_factory.mktemp("m") / "m.csv"
    write_matrix_csv(path, m)
    np.testing.assert_array_equal(read_matrix_csv(path), m)


def test_matrix_csv_header(tmp_path):
    write_matrix_csv(tmp_path / "v.csv", [1.0, 0.1])
    assert (tmp_path / "v.csv").read_text() == "# 2 1\n1\n0.10000000000000001\n"


def test_matrix_csv_errors_carry_line(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("# 2 2\n1,2\n3,x\n")
    with pytest.raises(ParseError) as exc:
        read_matrix_csv(p)
    assert exc.value.line == 3
    p.write_text("2 2\n1,2\n")
    with pytest.raises(ParseError):
        read_matrix_csv(p)
    p.write_text("# 1 2\n1,2,3\n")
    with pytest.raises(ParseError):
        read_matrix_csv(p)


def test_states_and_sigma_round_trip(tmp_path, rng):
    a = rng.normal(size=(3, 3))
    np.fill_diagonal(a, 0)
    states = [StatePair(a, rng.normal(size=3), 1), StatePair.zeros(3, 2)]
    entries = write_states(tmp_path, states)
    assert read_states(tmp_path, entries) == states
    write_sigma(tmp_path / "s.csv", [2, 1, 2])
    assert read_sigma(tmp_path / "s.csv", 2).sigma.tolist() == [2, 1, 2]


def test_dataset_round_trip_and_digests(tmp_path):
    cfg = GenerationConfig(n_nodes=16, kron_power=2, n_cascades=8, n_intervals=4, rng_seed=5)
    ds = generate_dataset(cfg)
    save_dataset(tmp_path / "a", ds)
    save_dataset(tmp_path / "b", generate_dataset(cfg))
    back = load_dataset(tmp_path / "a")
    np.testing.assert_array_equal(back.X, ds.X)
    for y0, y1 in zip(back.Y, ds.Y):
        np.testing.assert_array_equal(y0, y1)
    assert back.states == ds.states
    np.testing.assert_array_equal(back.sigma.sigma, ds.sigma.sigma)
    assert tree_digests(tmp_path / "a") == tree_digests(tmp_path / "b")
