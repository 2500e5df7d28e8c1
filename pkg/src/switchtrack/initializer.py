"""Ridge-regularized per-interval estimates and their k-means centroids, used to
seed the tracker.

Per node i the interval objective is

    J(a, b) = 1/2 ||y_i - Y_{-i}^T a - b x_i||^2 + mu ||a||^2,

minimized by alternating the two exact block updates

    a = (Y_{-i} Y_{-i}^T + 2 mu I)^{-1} Y_{-i} (y_i - b x_i)
    b = (y_i - Y_{-i}^T a)^T x_i / ||x_i||^2
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .closed_form import unvectorize_theta, vectorize_theta
from .errors import ConfigError, InvalidInputError, NumericalError, ZeroSusceptibilityError
from .kmeans import kmeans
from .sem import StatePair

logger = logging.getLogger(__name__)


@dataclass
class RidgeConfig:
    mu: float = 0.01
    t_init: int = 50
    max_alt_iters: int = 200
    tol_alt: float = 1e-8

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigError("mu must be > 0")
        if self.t_init < 1:
            raise ConfigError("t_init must be >= 1")
        if self.max_alt_iters < 1 or self.tol_alt < 0:
            raise ConfigError("max_alt_iters must be >= 1 and tol_alt >= 0")

    def to_dict(self):
        return dict(mu=self.mu, t_init=self.t_init, max_alt_iters=self.max_alt_iters, tol_alt=self.tol_alt)


def node_objective(y, Z, x, a, b, mu) -> float:
    r = y - Z.T @ a - b * x
    return 0.5 * float(r @ r) + mu * float(a @ a)


def _ridge_node(y, Z, x, mu, max_iters, tol, history=None):
    """Alternation for a single node; ``Z`` holds the other nodes' rows."""
    xx = float(x @ x)
    b = float(y @ x) / xx
    if Z.shape[0] == 0:
        return np.zeros(0), b
    gram = Z @ Z.T
    gram[np.diag_indices_from(gram)] += 2.0 * mu
    fac = linalg.cho_factor(gram, check_finite=False)
    gy = linalg.cho_solve(fac, Z @ y, check_finite=False)
    gx = linalg.cho_solve(fac, Z @ x, check_finite=False)
    a = gy - b * gx
    prev = node_objective(y, Z, x, a, b, mu)
    if history is not None:
        history.append(prev)
    for _ in range(max_iters):
        b_new = float((y - Z.T @ a) @ x) / xx
        a_new = gy - b_new * gx
        obj = node_objective(y, Z, x, a_new, b_new, mu)
        if obj > prev + 1e-12 * (1.0 + abs(prev)):
            raise NumericalError(f"ridge alternation increased the objective ({prev:.17g} -> {obj:.17g})")
        if history is not None:
            history.append(obj)
        change = np.sqrt(np.sum((a_new - a) ** 2) + (b_new - b) ** 2)
        size = np.sqrt(np.sum(a_new**2) + b_new**2)
        a, b, prev = a_new, b_new, obj
        if change <= tol * max(size, 1e-300):
            break
    return a, b


def _pair_objectives(Y, X, A, b, mu):
    R = Y - A @ Y - b[:, None] * X
    return 0.5 * np.einsum("ij,ij->i", R, R) + mu * np.einsum("ij,ij->i", A, A)


def ridge_pair(Y, X, mu=0.01, max_alt_iters=200, tol_alt=1e-8, state_id=1, history=None) -> StatePair:
    """Ridge estimate of (A, b) from a single interval.

    All nodes alternate together; a node stops moving once its relative change
    falls below ``tol_alt``. ``history`` (a list) receives the per-node
    objective vector after every sweep.
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if Y.shape != X.shape or Y.ndim != 2:
        raise InvalidInputError(f"Y {Y.shape} and X {X.shape} must be equal-shape matrices")
    if not mu > 0:
        raise InvalidInputError("mu must be > 0")
    n = Y.shape[0]
    xx = np.einsum("ij,ij->i", X, X)
    if np.any(xx == 0):
        raise ZeroSusceptibilityError(int(np.flatnonzero(xx == 0)[0]) + 1)
    # rows of GY, GX: (Z Z^T + 2 mu I)^{-1} Z y_i and ... Z x_i, scattered back to length N
    GY = np.zeros((n, n))
    GX = np.zeros((n, n))
    gram_full = Y @ Y.T
    YY, YX = gram_full, Y @ X.T
    for i in range(n):
        others = np.r_[0:i, i + 1 : n]
        gram = gram_full[np.ix_(others, others)].copy()
        gram[np.diag_indices_from(gram)] += 2.0 * mu
        fac = linalg.cho_factor(gram, check_finite=False)
        GY[i, others] = linalg.cho_solve(fac, YY[others, i], check_finite=False)
        GX[i, others] = linalg.cho_solve(fac, YX[others, i], check_finite=False)
    b = np.einsum("ij,ij->i", Y, X) / xx
    A = GY - b[:, None] * GX
    prev = _pair_objectives(Y, X, A, b, mu)
    if history is not None:
        history.append(prev)
    active = np.ones(n, dtype=bool)
    for _ in range(max_alt_iters):
        b_new = np.where(active, np.einsum("ij,ij->i", Y - A @ Y, X) / xx, b)
        A_new = np.where(active[:, None], GY - b_new[:, None] * GX, A)
        obj = _pair_objectives(Y, X, A_new, b_new, mu)
        worse = obj > prev + 1e-12 * (1.0 + np.abs(prev))
        if np.any(worse):
            i = int(np.flatnonzero(worse)[0])
            raise NumericalError(f"ridge alternation increased node {i + 1}'s objective")
        if history is not None:
            history.append(obj)
        change = np.sqrt(np.einsum("ij,ij->i", A_new - A, A_new - A) + (b_new - b) ** 2)
        size = np.sqrt(np.einsum("ij,ij->i", A_new, A_new) + b_new**2)
        A, b, prev = A_new, b_new, obj
        active &= change > tol_alt * np.maximum(size, 1e-300)
        if not active.any():
            break
    return StatePair.hollow(A, b, state_id)


def ridge_thetas(snapshots, X, config: RidgeConfig) -> np.ndarray:
    """Vectorized ridge estimates for the first ``t_init`` intervals (one row each)."""
    Ys = [np.asarray(s) for s in snapshots][: config.t_init]
    if len(Ys) < config.t_init:
        raise InvalidInputError(f"need {config.t_init} snapshots, got {len(Ys)}")
    return np.vstack([
        vectorize_theta(ridge_pair(Y, X, config.mu, config.max_alt_iters, config.tol_alt)).theta for Y in Ys
    ])


def batch_initialize(snapshots, X, n_states: int, config: RidgeConfig | None = None, rng_seed: int = 0,
                     n_init: int = 10, return_model: bool = False):
    """S initial states as k-means centroids of per-interval ridge estimates.

    With ``return_model`` the k-means model (whose assignments label the
    initialization intervals) is returned as well.
    """
    config = config or RidgeConfig()
    if config.t_init < n_states:
        raise InvalidInputError(f"t_init={config.t_init} is smaller than S={n_states}")
    thetas = ridge_thetas(snapshots, X, config)
    model = kmeans(thetas, n_states, rng_seed=rng_seed, n_init=n_init)
    logger.info("initialized %d states from %d intervals (inertia %.6g)", n_states, len(thetas), model.inertia)
    states = [unvectorize_theta(c, s) for s, c in enumerate(model.centroids, start=1)]
    return (states, model) if return_model else states
