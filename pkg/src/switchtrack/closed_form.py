"""Noise-free closed-form recovery of (A, b) per interval and clustering-based
state identification.

With X of full row rank, ``Phi = Y_t X^+`` equals ``(I - A)^{-1} diag(b)``, so
``diag(b)^{-1} (I - A) = Phi^{-1}``. The diagonal of ``Phi^{-1}`` gives ``1/b`` and the
off-diagonal part gives ``A``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateIntervalError,
    IdentifiabilityViolationError,
    InvalidInputError,
    NumericalError,
    RankDeficiencyError,
)
from .kmeans import ClusterModel, kmeans, nearest_centroid
from .sem import StatePair, SwitchSequence

logger = logging.getLogger(__name__)

RANK_RTOL = 1e-10
DIAG_GUARD = 1e-10


@dataclass(frozen=True)
class ThetaVector:
    """Column-major ``vec([A b])`` of one interval or centroid."""

    theta: np.ndarray
    source_t: int | None = None

    def __array__(self, dtype=None, copy=None):
        return self.theta if dtype is None else self.theta.astype(dtype)

    def __len__(self):
        return self.theta.size


def pinv_full_row_rank(X) -> np.ndarray:
    """``X^T (X X^T)^{-1}`` for a full-row-rank N x C matrix."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInputError("X must be 2-D")
    sv = np.linalg.svd(X, compute_uv=False)
    if sv.size == 0 or sv[0] == 0:
        raise RankDeficiencyError("X is zero", rank=0)
    rank = int(np.sum(sv > RANK_RTOL * sv[0]))
    if X.shape[0] > X.shape[1] or rank < X.shape[0]:
        raise RankDeficiencyError(f"X must have full row rank {X.shape[0]}; numerical rank is {rank}", rank=rank)
    # solve rather than invert X X^T
    return np.linalg.solve(X @ X.T, X).T


def closed_form_pair(Y, X, x_pinv=None, state_id=1) -> StatePair:
    """Exact (A, b) for one noise-free interval."""
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if Y.shape != X.shape:
        raise InvalidInputError(f"Y {Y.shape} and X {X.shape} differ in shape")
    if x_pinv is None:
        x_pinv = pinv_full_row_rank(X)
    phi = Y @ x_pinv
    sv = np.linalg.svd(phi, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= RANK_RTOL * sv[0]:
        raise DegenerateIntervalError("Y_t X^+ is singular")
    phi_inv = np.linalg.inv(phi)
    d = np.diag(phi_inv).copy()
    scale = np.abs(phi_inv).max()
    if np.any(np.abs(d) <= DIAG_GUARD * scale):
        raise IdentifiabilityViolationError(
            f"zero diagonal of (Y_t X^+)^-1 at nodes {np.flatnonzero(np.abs(d) <= DIAG_GUARD * scale).tolist()}"
        )
    b = 1.0 / d
    a = np.eye(X.shape[0]) - b[:, None] * phi_inv
    # the diagonal is zero up to round-off; make it exact
    np.fill_diagonal(a, 0.0)
    return StatePair(a, b, state_id)


def vectorize_theta(pair: StatePair, source_t=None) -> ThetaVector:
    return ThetaVector(np.column_stack([pair.a, pair.b]).ravel(order="F"), source_t)


def theta_size_to_n(length: int) -> int:
    n = int(round((-1 + np.sqrt(1 + 4 * length)) / 2))
    if n < 1 or n * (n + 1) != length:
        raise InvalidInputError(f"length {length} is not N(N+1) for any N")
    return n


def unvectorize_theta(theta, state_id=1) -> StatePair:
    theta = np.asarray(theta, dtype=float).ravel()
    n = theta_size_to_n(theta.size)
    m = theta.reshape((n, n + 1), order="F")
    return StatePair.hollow(m[:, :n], m[:, n].copy(), state_id)


def assign_state(theta, centroids) -> int:
    """Closest centroid in Euclidean distance (1-based, ties to the smallest)."""
    return nearest_centroid(np.asarray(theta, dtype=float), np.asarray(centroids, dtype=float))


def state_coverage_probability(p_s: float, T: int) -> float:
    """Probability that a state with activation probability ``p_s`` shows up in T draws."""
    if not 0.0 <= p_s <= 1.0:
        raise InvalidInputError("p_s must lie in [0, 1]")
    if T < 0 or int(T) != T:
        raise InvalidInputError("T must be a non-negative integer")
    return 1.0 - (1.0 - p_s) ** int(T)


@dataclass
class ClusterIdentification:
    states: list
    sigma: SwitchSequence
    model: ClusterModel
    thetas: np.ndarray                      # one row per successfully recovered interval
    theta_t: np.ndarray                     # 1-based interval index of each row
    skipped: list = field(default_factory=list)   # (t, reason)


def cluster_identify(snapshots, X, n_states: int, t_cluster: int, rng_seed: int = 0, n_init: int = 10) -> ClusterIdentification:
    """Closed-form θ per interval, k-means on the first ``t_cluster``, then nearest centroid.

    Intervals whose closed-form recovery fails are left out of clustering and
    listed in ``skipped``; they get the state with the smallest SEM residual
    under the centroid pairs.
    """
    from .tracker import estimate_state_apriori

    X = np.asarray(X, dtype=float)
    Ys = [np.asarray(s, dtype=float) for s in snapshots]
    if not 1 <= t_cluster <= len(Ys):
        raise InvalidInputError(f"t_cluster must lie in 1..{len(Ys)}")
    x_pinv = pinv_full_row_rank(X)
    thetas, theta_t, skipped = [], [], []
    for t, Y in enumerate(Ys, start=1):
        try:
            thetas.append(vectorize_theta(closed_form_pair(Y, X, x_pinv)).theta)
            theta_t.append(t)
        except NumericalError as exc:
            logger.warning("interval %d skipped: %s", t, exc)
            skipped.append((t, str(exc)))
    thetas = np.array(thetas).reshape(len(theta_t), -1)
    theta_t = np.asarray(theta_t, dtype=np.int64)
    train = theta_t <= t_cluster
    if train.sum() < n_states:
        raise InvalidInputError(f"only {int(train.sum())} usable training intervals for {n_states} states")
    model = kmeans(thetas[train], n_states, rng_seed=rng_seed, n_init=n_init)
    states = [unvectorize_theta(c, s) for s, c in enumerate(model.centroids, start=1)]
    sigma = np.zeros(len(Ys), dtype=np.int64)
    sigma[theta_t[train] - 1] = model.assignments
    for row in np.flatnonzero(~train):
        sigma[theta_t[row] - 1] = assign_state(thetas[row], model.centroids)
    for t, _ in skipped:
        sigma[t - 1] = estimate_state_apriori(Ys[t - 1], states, X)
    return ClusterIdentification(states, SwitchSequence(sigma, n_states), model, thetas, theta_t, skipped)
