"""Lloyd's k-means with greedy k-means++ seeding.

Small and deterministic: the best of ``n_init`` seeded restarts is returned
together with its per-iteration inertia history.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError


@dataclass
class ClusterModel:
    centroids: np.ndarray          # k x d
    assignments: np.ndarray        # 1-based labels, one per point
    inertia: float
    inertia_history: list = field(default_factory=list)
    n_iter: int = 0

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def to_dict(self) -> dict:
        from .io import format_float

        return {
            "k": self.k,
            "dim": int(self.centroids.shape[1]),
            "centroids": [",".join(format_float(v) for v in row) for row in self.centroids],
            "assignments": [int(a) for a in self.assignments],
            "inertia": float(self.inertia),
            "inertia_history": [float(v) for v in self.inertia_history],
            "n_iter": int(self.n_iter),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        cent = np.array([[float(v) for v in row.split(",")] for row in d["centroids"]])
        return cls(cent.reshape(d["k"], d["dim"]), np.asarray(d["assignments"], dtype=np.int64),
                   float(d["inertia"]), list(d.get("inertia_history", [])), int(d.get("n_iter", 0)))


def _sq_dists(points, centroids):
    # |p|^2 - 2 p.c + |c|^2, clipped against round-off
    d = (points**2).sum(1)[:, None] - 2.0 * points @ centroids.T + (centroids**2).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _exact_sq_dists(points, centroids):
    return ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)


def _plusplus(points, k, rng):
    """Greedy k-means++: each new centre is the best of a few D^2-weighted draws."""
    n = points.shape[0]
    trials = 2 + int(np.log(k))
    idx = [int(rng.integers(n))]
    closest = _exact_sq_dists(points, points[idx]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0:
            # every point coincides with a chosen centre; take unused indices in order
            idx.append(next(i for i in range(n) if i not in idx))
            continue
        cand = rng.choice(n, size=trials, p=closest / total)
        pots = np.minimum(closest[None, :], _exact_sq_dists(points, points[cand]).T)
        best = int(np.argmin(pots.sum(1)))
        idx.append(int(cand[best]))
        closest = pots[best]
    return points[idx].copy()


def _lloyd(points, centroids, max_iter, dist):
    history = []
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        d = dist(points, centroids)
        new_labels = np.argmin(d, axis=1)
        k = centroids.shape[0]
        counts = np.bincount(new_labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            # refill an empty cluster with the point farthest from its centroid
            far = int(np.argmax(d[np.arange(len(points)), new_labels]))
            new_labels[far] = j
            d[far] = 0.0
            counts = np.bincount(new_labels, minlength=k)
        centroids = np.vstack([points[new_labels == j].mean(0) for j in range(k)])
        inertia = float(((points - centroids[new_labels]) ** 2).sum())
        history.append(inertia)
        if labels is not None and np.array_equal(labels, new_labels):
            labels = new_labels
            break
        labels = new_labels
    return centroids, labels, history, it


def kmeans(points, k: int, rng_seed: int = 0, max_iter: int = 300, n_init: int = 10) -> ClusterModel:
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.ndim != 2 or points.shape[0] == 0:
        raise InvalidInputError("kmeans needs a non-empty 2-D array of points")
    if not np.all(np.isfinite(points)):
        raise InvalidInputError("points contain non-finite values")
    k = int(k)
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if k > points.shape[0]:
        raise InvalidInputError(f"k={k} exceeds the number of points ({points.shape[0]})")
    # exact differences for small problems, expanded form otherwise
    dist = _exact_sq_dists if points.shape[0] * k * points.shape[1] <= 2_000_000 else _sq_dists
    rng = np.random.default_rng(rng_seed)
    best = None
    for _ in range(max(1, int(n_init))):
        cent, labels, hist, it = _lloyd(points, _plusplus(points, k, rng), max_iter, dist)
        if best is None or hist[-1] < best[2][-1]:
            best = (cent, labels, hist, it)
    cent, labels, hist, it = best
    return ClusterModel(cent, labels + 1, hist[-1], hist, it)


def nearest_centroid(point, centroids) -> int:
    """1-based index of the closest centroid; ties go to the smallest index."""
    d = ((np.asarray(centroids) - np.asarray(point)[None, :]) ** 2).sum(1)
    return int(np.argmin(d)) + 1
