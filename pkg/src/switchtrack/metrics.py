"""Evaluation metrics and graph statistics of estimated topologies."""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse import csgraph

from .errors import InvalidInputError, ResourceGuardError, UndefinedMetricError
from .kmeans import kmeans
from .sem import StatePair

SUPPORT_THRESHOLD = 1e-4
MAX_PERMUTATION_STATES = 8


def relative_error(truth: StatePair, est: StatePair) -> float:
    """``(||A - A_hat|| + ||B - B_hat||) / (||A_hat|| + ||B_hat||)``, Frobenius norms.

    The denominator uses the estimates, so the measure is not symmetric.
    """
    if truth.n != est.n:
        raise InvalidInputError(f"pairs have {truth.n} and {est.n} nodes")
    denom = np.linalg.norm(est.a) + np.linalg.norm(est.b)
    if denom == 0:
        raise UndefinedMetricError("relative error is undefined for an all-zero estimate")
    return float((np.linalg.norm(truth.a - est.a) + np.linalg.norm(truth.b - est.b)) / denom)


def _offdiag(m):
    return ~np.eye(m.shape[0], dtype=bool)


def support_f1(truth_a, est_a, threshold: float = SUPPORT_THRESHOLD):
    """Precision, recall and F1 of the off-diagonal support ``|a_hat| > threshold``."""
    truth_a = np.asarray(truth_a, dtype=float)
    est_a = np.asarray(est_a, dtype=float)
    if truth_a.shape != est_a.shape or truth_a.ndim != 2 or truth_a.shape[0] != truth_a.shape[1]:
        raise InvalidInputError("support_f1 needs two square matrices of equal shape")
    if threshold < 0:
        raise InvalidInputError("threshold must be >= 0")
    off = _offdiag(truth_a)
    true_edges = (truth_a != 0) & off
    pred = (np.abs(est_a) > threshold) & off
    tp = int(np.sum(true_edges & pred))
    fp = int(np.sum(~true_edges & pred))
    fn = int(np.sum(true_edges & ~pred))
    # empty sets count as perfectly recovered
    precision = tp / (tp + fp) if tp + fp else float(fn == 0)
    recall = tp / (tp + fn) if tp + fn else float(fp == 0)
    f1 = 2 * tp / (2 * tp + fp + fn) if tp + fp + fn else 1.0
    return precision, recall, f1


def align_labels(sigma_true, sigma_est, n_states: int):
    """Best relabeling of ``sigma_est`` over all permutations of 1..S.

    Returns ``(mapping, accuracy)`` where ``mapping[k-1]`` is the true label
    assigned to estimated label k.
    """
    t = np.asarray(sigma_true, dtype=np.int64).ravel()
    e = np.asarray(sigma_est, dtype=np.int64).ravel()
    if t.shape != e.shape or t.size == 0:
        raise InvalidInputError("sequences must be nonempty and of equal length")
    if n_states > MAX_PERMUTATION_STATES:
        raise ResourceGuardError(f"S={n_states} exceeds the permutation guard ({MAX_PERMUTATION_STATES})")
    if t.min() < 1 or e.min() < 1 or max(t.max(), e.max()) > n_states:
        raise InvalidInputError(f"labels must lie in 1..{n_states}")
    conf = np.zeros((n_states, n_states), dtype=np.int64)      # conf[est, true]
    np.add.at(conf, (e - 1, t - 1), 1)
    best, best_hits = None, -1
    cols = np.arange(n_states)
    for perm in itertools.permutations(range(n_states)):
        hits = int(conf[cols, perm].sum())
        if hits > best_hits:
            best, best_hits = perm, hits
    return tuple(p + 1 for p in best), best_hits / t.size


def state_accuracy(sigma_true, sigma_est, n_states: int) -> float:
    return align_labels(sigma_true, sigma_est, n_states)[1]


def intra_cluster_dispersion(thetas, centroids, assignments) -> float:
    """log10 of the summed squared distances to the assigned centroids.

    Returns ``-inf`` when every point sits exactly on its centroid.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    centroids = np.atleast_2d(np.asarray(centroids, dtype=float))
    assignments = np.asarray(assignments, dtype=np.int64).ravel()
    if thetas.size == 0 or assignments.size == 0:
        raise InvalidInputError("dispersion of an empty set")
    if assignments.size != thetas.shape[0]:
        raise InvalidInputError("one assignment per point is required")
    if assignments.min() < 1 or assignments.max() > centroids.shape[0]:
        raise InvalidInputError("assignments out of range")
    total = float(((thetas - centroids[assignments - 1]) ** 2).sum())
    return -np.inf if total == 0 else float(np.log10(total))


def dispersion_sweep(thetas, s_values, rng_seed: int = 0, n_init: int = 10) -> list[tuple[int, float]]:
    """k-means with each S in ``s_values`` and the resulting dispersion."""
    out = []
    for s in s_values:
        model = kmeans(thetas, int(s), rng_seed=rng_seed, n_init=n_init)
        out.append((int(s), intra_cluster_dispersion(thetas, model.centroids, model.assignments)))
    return out


def largest_drop(sweep) -> int:
    """S at which the dispersion falls the most relative to the previous S."""
    s = [v for v, _ in sweep]
    d = np.array([v for _, v in sweep])
    drops = d[:-1] - d[1:]
    if drops.size == 0:
        raise InvalidInputError("a sweep needs at least two values")
    return s[int(np.argmax(drops)) + 1]


@dataclass
class GraphStats:
    avg_clustering_coefficient: float
    diameter: int
    avg_num_neighbors: float
    avg_shortest_path_length: float
    n_nodes: int
    n_edges: int
    largest_component_size: int
    connected: bool

    def to_dict(self):
        return asdict(self)


def undirected_support(A, threshold: float = SUPPORT_THRESHOLD) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError("A must be square")
    D = (np.abs(A) > threshold) & _offdiag(A)
    return D | D.T


def graph_stats(A, threshold: float = SUPPORT_THRESHOLD) -> GraphStats:
    """Small-world statistics of the undirected support of ``A``.

    Path lengths and diameter use the largest connected component; clustering
    and neighbor counts average over every node.
    """
    U = undirected_support(A, threshold)
    n = U.shape[0]
    n_edges = int(U.sum() // 2)
    if n_edges == 0:
        raise UndefinedMetricError("graph statistics are undefined for a graph with no edges")
    Ui = U.astype(np.int64)
    deg = Ui.sum(1)
    tri = np.einsum("ij,jk,ki->i", Ui, Ui, Ui) / 2
    pairs = deg * (deg - 1) / 2
    clustering = np.where(deg >= 2, tri / np.where(pairs > 0, pairs, 1), 0.0)

    n_comp, labels = csgraph.connected_components(U, directed=False)
    sizes = np.bincount(labels)
    lcc = np.flatnonzero(labels == int(np.argmax(sizes)))
    dist = csgraph.shortest_path(U[np.ix_(lcc, lcc)].astype(float), method="D", directed=False, unweighted=True)
    m = lcc.size
    avg_path = float(dist.sum() / (m * (m - 1))) if m > 1 else 0.0
    return GraphStats(
        avg_clustering_coefficient=float(clustering.mean()),
        diameter=int(dist.max()),
        avg_num_neighbors=float(deg.mean()),
        avg_shortest_path_length=avg_path,
        n_nodes=n,
        n_edges=n_edges,
        largest_component_size=int(m),
        connected=bool(n_comp == 1),
    )


def out_degree_ranking(A, threshold: float = SUPPORT_THRESHOLD, top_k: int | None = None) -> list[tuple[int, int]]:
    """Nodes (1-based) by decreasing out-degree, ties by node index.

    ``a_ij != 0`` is an edge j -> i, so node j's out-degree counts column j.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError("A must be square")
    out = ((np.abs(A) > threshold) & _offdiag(A)).sum(0)
    order = np.lexsort((np.arange(out.size), -out))
    ranked = [(int(j) + 1, int(out[j])) for j in order]
    return ranked if top_k is None else ranked[:top_k]
