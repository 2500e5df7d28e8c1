import numpy as np
import pytest
from hypothesis import given, strategies as st

from switchtrack.errors import InvalidInputError
from switchtrack.kmeans import ClusterModel, kmeans, nearest_centroid


def test_k_equals_n_points():
    pts = np.array([[0.0], [1.0], [5.0]])
    m = kmeans(pts, 3)
    assert m.inertia == 0
    assert sorted(m.centroids.ravel()) == [0.0, 1.0, 5.0]


def test_two_blobs():
    rng = np.random.default_rng(0)
    lo, hi = rng.normal(0, 1, 40), rng.normal(100, 1, 40)
    m = kmeans(np.r_[lo, hi][:, None], 2, rng_seed=1)
    cent = np.sort(m.centroids.ravel())
    assert abs(cent[0] - lo.mean()) < 1 and abs(cent[1] - hi.mean()) < 1
    assert cent[0] == pytest.approx(lo.mean()) and cent[1] == pytest.approx(hi.mean())


def test_single_cluster_is_mean():
    pts = np.random.default_rng(1).normal(size=(30, 4))
    m = kmeans(pts, 1)
    np.testing.assert_allclose(m.centroids[0], pts.mean(0))
    assert np.all(m.assignments == 1)


@given(st.integers(0, 10_000), st.integers(1, 5))
def test_inertia_monotone_and_consistent(seed, k):
    pts = np.random.default_rng(seed).normal(size=(25, 3))
    m = kmeans(pts, k, rng_seed=seed, n_init=1)
    assert all(b <= a + 1e-9 for a, b in zip(m.inertia_history, m.inertia_history[1:]))
    assert m.inertia == pytest.approx(((pts - m.centroids[m.assignments - 1]) ** 2).sum())
    assert set(m.assignments) <= set(range(1, k + 1))


def test_deterministic_given_seed():
    pts = np.random.default_rng(3).normal(size=(40, 2))
    a, b = kmeans(pts, 3, rng_seed=11), kmeans(pts, 3, rng_seed=11)
    np.testing.assert_array_equal(a.centroids, b.centroids)


def test_errors():
    with pytest.raises(InvalidInputError):
        kmeans(np.zeros((0, 2)), 1)
    with pytest.raises(InvalidInputError):
        kmeans(np.zeros((3, 2)), 0)
    with pytest.raises(InvalidInputError):
        kmeans(np.zeros((3, 2)), 4)


def test_nearest_centroid_ties_and_exact():
    cents = np.array([[0.0, 0.0], [2.0, 0.0]])
    assert nearest_centroid(np.array([1.0, 0.0]), cents) == 1
    assert nearest_centroid(np.array([2.0, 0.0]), cents) == 2


def test_model_json_round_trip():
    m = kmeans(np.random.default_rng(2).normal(size=(10, 3)), 2)
    back = ClusterModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.centroids, m.centroids)
    np.testing.assert_array_equal(back.assignments, m.assignments)
