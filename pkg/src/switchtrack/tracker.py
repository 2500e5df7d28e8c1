"""Online tracking of switched topologies by recursive proximal gradient (ISTA).

For each new snapshot Y_t the tracker

1. picks the active state, by smallest a priori SEM residual (default) or by
   smallest residual after a hypothetical update of every state,
2. folds Y_t into that state's running statistics
   ``Omega = sum beta^(t-tau) Y Y^T``, ``Ybar = sum beta^(t-tau) Y``, ``alpha = sum beta^(t-tau)``,
3. runs a few ISTA iterations on that state's penalized LS cost, warm-started
   from its previous estimate.

The smooth cost is separable over nodes. Row i of A (without its diagonal
entry) and b_i form one block whose Hessian is

    [[Omega_{-i},          Ybar_{-i} x_i],
     [x_i^T Ybar_{-i}^T,   alpha ||x_i||^2]]

so gradients, objective values and Lipschitz constants for all nodes come from
Omega, P = Ybar X^T and alpha, with no access to past data.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DivergenceError, InvalidInputError, NumericalError
from .sem import StatePair, SwitchSequence, sem_residual

logger = logging.getLogger(__name__)

STEP_RULES = ("exact_lipschitz", "backtracking")
CRITERIA = ("apriori", "aposteriori")


# ---------------------------------------------------------------------------
# configuration and statistics


@dataclass
class TrackerConfig:
    lam: float | list = 0.95
    beta: float = 1.0
    max_inner_iters: int = 5
    tol_inner: float = 1e-6
    step_rule: str = "backtracking"
    state_criterion: str = "apriori"
    per_node_step: bool = False
    lipschitz_floor: float = 1e-12

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if np.any(lam < 0) or not np.all(np.isfinite(lam)):
            raise ConfigError("lambda values must be finite and >= 0")
        if not 0.0 < self.beta <= 1.0:
            raise ConfigError("beta must lie in (0, 1]")
        if self.max_inner_iters < 1:
            raise ConfigError("max_inner_iters must be >= 1")
        if self.tol_inner < 0:
            raise ConfigError("tol_inner must be >= 0")
        if self.step_rule not in STEP_RULES:
            raise ConfigError(f"step_rule must be one of {STEP_RULES}")
        if self.state_criterion not in CRITERIA:
            raise ConfigError(f"state_criterion must be one of {CRITERIA}")
        if not self.lipschitz_floor > 0:
            raise ConfigError("lipschitz_floor must be > 0")

    @classmethod
    def streaming(cls, lam=0.95, **kw):
        kw.setdefault("max_inner_iters", 5)
        kw.setdefault("state_criterion", "apriori")
        kw.setdefault("step_rule", "backtracking")
        return cls(lam=lam, **kw)

    @classmethod
    def offline(cls, lam=0.95, **kw):
        kw.setdefault("max_inner_iters", 100)
        kw.setdefault("state_criterion", "aposteriori")
        kw.setdefault("tol_inner", 1e-6)
        return cls(lam=lam, **kw)

    def lambda_for(self, s: int) -> float:
        """l1 weight of state ``s`` (1-based); a scalar applies to every state."""
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if lam.size == 1:
            return float(lam[0])
        if not 1 <= s <= lam.size:
            raise InvalidInputError(f"no lambda configured for state {s}")
        return float(lam[s - 1])

    def to_dict(self):
        lam = self.lam if np.isscalar(self.lam) else [float(v) for v in self.lam]
        return dict(lam=lam, beta=self.beta, max_inner_iters=self.max_inner_iters, tol_inner=self.tol_inner,
                    step_rule=self.step_rule, state_criterion=self.state_criterion,
                    per_node_step=self.per_node_step, lipschitz_floor=self.lipschitz_floor)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown tracker keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class StateStats:
    """Discounted sufficient statistics of one state."""

    omega: np.ndarray   # N x N
    ybar: np.ndarray    # N x C
    alpha: float = 0.0

    @classmethod
    def zeros(cls, n, c):
        return cls(np.zeros((n, n)), np.zeros((n, c)), 0.0)

    def copy(self):
        return StateStats(self.omega.copy(), self.ybar.copy(), float(self.alpha))

    def decayed(self, beta):
        if beta == 1.0:
            return self
        return StateStats(beta * self.omega, beta * self.ybar, beta * self.alpha)

    def updated(self, Y, beta=1.0):
        return StateStats(beta * self.omega + Y @ Y.T, beta * self.ybar + Y, beta * self.alpha + 1.0)

    # trimmed views used by the per-node gradients
    def omega_minus(self, i):
        keep = np.r_[0 : i - 1, i : self.omega.shape[0]]
        return self.omega[np.ix_(keep, keep)]

    def omega_col_minus(self, i):
        keep = np.r_[0 : i - 1, i : self.omega.shape[0]]
        return self.omega[keep, i - 1]

    def ybar_minus(self, i):
        return np.delete(self.ybar, i - 1, axis=0)


@dataclass
class TrackerStats:
    per_state: list

    @classmethod
    def zeros(cls, n_states, n, c):
        return cls([StateStats.zeros(n, c) for _ in range(n_states)])

    @property
    def n_states(self):
        return len(self.per_state)

    def for_state(self, s: int) -> StateStats:
        return self.per_state[s - 1]

    def copy(self):
        return TrackerStats([st.copy() for st in self.per_state])


def update_stats(stats: TrackerStats, Y, s_hat: int, beta: float = 1.0) -> TrackerStats:
    """New statistics after assigning ``Y`` to state ``s_hat``.

    Every state is discounted by ``beta``; only ``s_hat`` receives ``Y``. With
    ``beta == 1`` the other states are carried over unchanged.
    """
    Y = np.asarray(Y, dtype=float)
    if not 1 <= s_hat <= stats.n_states:
        raise InvalidInputError(f"state {s_hat} out of range 1..{stats.n_states}")
    return TrackerStats([
        st.updated(Y, beta) if s == s_hat else st.decayed(beta)
        for s, st in enumerate(stats.per_state, start=1)
    ])


@dataclass
class StepState:
    lipschitz: np.ndarray      # per state; NaN until first estimated
    inner_iter: int = 0

    @classmethod
    def initial(cls, n_states):
        return cls(np.full(n_states, np.nan))


# ---------------------------------------------------------------------------
# per-state quadratic model


class _Quadratic:
    """Smooth part of the per-state cost, assembled from the statistics."""

    def __init__(self, stats: StateStats, X):
        X = np.asarray(X, dtype=float)
        if stats.omega.shape[0] != X.shape[0] or stats.ybar.shape != X.shape:
            raise InvalidInputError("statistics and X disagree in shape")
        self.omega = stats.omega
        self.P = stats.ybar @ X.T          # P[j, i] = ybar_j . x_i
        self.alpha = float(stats.alpha)
        self.xx = np.einsum("ij,ij->i", X, X)
        self.n = X.shape[0]

    def gradients(self, A, b):
        G = A @ self.omega + b[:, None] * self.P.T - self.omega
        np.fill_diagonal(G, 0.0)
        gb = np.einsum("ij,ji->i", A, self.P) + self.alpha * b * self.xx - np.diag(self.P)
        return G, gb

    def node_values(self, A, b):
        """Per-node smooth cost f_i."""
        M = np.eye(self.n) - A
        quad = np.einsum("ij,ij->i", M @ self.omega, M)
        cross = np.einsum("ij,ji->i", M, self.P)
        return 0.5 * (quad - 2.0 * b * cross + self.alpha * b**2 * self.xx)

    def curvature(self, D, db):
        """``d^T H_i d`` for each node's step (rows of D with db)."""
        return (np.einsum("ij,ij->i", D @ self.omega, D)
                + 2.0 * db * np.einsum("ij,ji->i", D, self.P)
                + self.alpha * self.xx * db**2)

    def block_matvec(self, V):
        """Column i of the result is H_i applied to column i of V.

        Coordinate i of each column stands for b_i, the rest for a_{-i}.
        """
        d = np.diag(V).copy()
        U = self.omega @ V + (self.P - self.omega) * d[None, :]
        U[np.diag_indices(self.n)] = (self.P * V).sum(0) - np.diag(self.P) * d + self.alpha * self.xx * d
        return U

    def node_lipschitz(self, tol=1e-6, max_iter=500):
        """Largest eigenvalue of each node's Hessian block, by power iteration."""
        rng = np.random.default_rng(12345)
        V = 1.0 + 0.1 * rng.standard_normal((self.n, self.n))
        V /= np.linalg.norm(V, axis=0)
        lam = np.zeros(self.n)
        for _ in range(max_iter):
            U = self.block_matvec(V)
            new = np.einsum("ij,ij->j", V, U)
            norms = np.linalg.norm(U, axis=0)
            done = np.abs(new - lam) <= tol * np.maximum(np.abs(new), 1e-300)
            lam = new
            if np.all(done | (norms == 0)):
                break
            V = np.where(norms > 0, U / np.where(norms > 0, norms, 1.0), V)
        return np.maximum(lam, 0.0)


def soft_threshold(M, mu):
    """Entrywise ``sign(m) * max(|m| - mu, 0)``."""
    if mu < 0:
        raise InvalidInputError("threshold must be >= 0")
    M = np.asarray(M, dtype=float)
    return np.sign(M) * np.maximum(np.abs(M) - mu, 0.0)


def smooth_objective(pair: StatePair, stats: StateStats, X) -> float:
    """``1/2 sum_tau w_tau ||Y_tau - A Y_tau - B X||_F^2`` evaluated from the statistics."""
    return float(_Quadratic(stats, X).node_values(pair.a, pair.b).sum())


def p1_objective(pair: StatePair, stats: StateStats, X, lam: float) -> float:
    return smooth_objective(pair, stats, X) + lam * float(np.abs(pair.a).sum())


def ista_gradients(pair: StatePair, stats: StateStats, X, i: int):
    """Gradients of the smooth cost w.r.t. ``a_{-i}`` and ``b_ii`` (node ``i`` is 1-based)."""
    X = np.asarray(X, dtype=float)
    n = pair.n
    if not 1 <= i <= n:
        raise InvalidInputError(f"node index {i} out of range 1..{n}")
    a_minus = np.delete(pair.a[i - 1], i - 1)
    b_ii = pair.b[i - 1]
    x_i = X[i - 1]
    ybar_minus = stats.ybar_minus(i)
    grad_a = stats.omega_minus(i) @ a_minus + (ybar_minus @ x_i) * b_ii - stats.omega_col_minus(i)
    grad_b = a_minus @ (ybar_minus @ x_i) + stats.alpha * b_ii * (x_i @ x_i) - stats.ybar[i - 1] @ x_i
    return grad_a, float(grad_b)


def lipschitz_bound(stats: StateStats, X, i: int | None = None, floor: float = 1e-12,
                    tol: float = 1e-6, max_iter: int = 500) -> float:
    """Largest eigenvalue of node ``i``'s Hessian block, or the max over all nodes."""
    q = _Quadratic(stats, X)
    per_node = q.node_lipschitz(tol, max_iter)
    if i is None:
        val = float(per_node.max()) if per_node.size else 0.0
    else:
        if not 1 <= i <= q.n:
            raise InvalidInputError(f"node index {i} out of range 1..{q.n}")
        val = float(per_node[i - 1])
    return max(val, floor)


def _initial_lipschitz(q, config, step, s):
    if config.step_rule == "exact_lipschitz":
        per_node = np.maximum(q.node_lipschitz(), config.lipschitz_floor)
        return per_node if config.per_node_step else np.full(q.n, per_node.max())
    prev = None if step is None else step.lipschitz[s - 1]
    if prev is None or not np.all(np.isfinite(prev)):
        # cheap upper bound on every block's eigenvalue: its trace
        trace = np.trace(q.omega) + q.alpha * q.xx
        prev = np.maximum(trace, config.lipschitz_floor)
        if not config.per_node_step:
            prev = prev.max()
    return np.broadcast_to(np.asarray(prev, dtype=float), (q.n,)).copy()


def ista_inner_solve(pair: StatePair, stats: StateStats, X, lam: float, config: TrackerConfig | None = None,
                     step: StepState | None = None, callback: Callable | None = None) -> StatePair:
    """ISTA iterations on one state's penalized LS cost, warm-started at ``pair``.

    Stops after ``config.max_inner_iters`` iterations or once the relative
    parameter change drops below ``config.tol_inner``. ``callback(k, pair, z)``
    receives each accepted iterate and the gradient point ``z`` before
    thresholding. ``step`` is updated in place with the step size used.
    """
    config = config or TrackerConfig()
    if lam < 0:
        raise InvalidInputError("lambda must be >= 0")
    if not stats.alpha > 0:
        raise InvalidInputError("the state being solved has no data (alpha = 0)")
    q = _Quadratic(stats, X)
    A, b = pair.a.copy(), pair.b.copy()
    L = _initial_lipschitz(q, config, step, pair.state_id)
    backtrack = config.step_rule == "backtracking"
    per_node = config.per_node_step
    k = 0
    for k in range(1, config.max_inner_iters + 1):
        G, gb = q.gradients(A, b)
        while True:
            Z = A - G / L[:, None]
            A_new = np.sign(Z) * np.maximum(np.abs(Z) - lam / L[:, None], 0.0)
            np.fill_diagonal(A_new, 0.0)
            b_new = b - gb / L
            if not (np.all(np.isfinite(A_new)) and np.all(np.isfinite(b_new))):
                raise DivergenceError(f"non-finite iterate at inner iteration {k} of state {pair.state_id}")
            if not backtrack:
                break
            D, db = A_new - A, b_new - b
            curv = q.curvature(D, db)
            step_sq = np.einsum("ij,ij->i", D, D) + db**2
            if per_node:
                bad = curv > L * step_sq * (1.0 + 1e-12)
                if not bad.any():
                    break
                L = np.where(bad, 2.0 * L, L)
            else:
                if curv.sum() <= L[0] * step_sq.sum() * (1.0 + 1e-12):
                    break
                L = 2.0 * L
            if not np.all(np.isfinite(L)):
                raise DivergenceError("step size underflow during backtracking")
        change = np.sqrt(np.sum((A_new - A) ** 2) + np.sum((b_new - b) ** 2))
        size = np.sqrt(np.sum(A**2) + np.sum(b**2))
        A, b = A_new, b_new
        if callback is not None:
            callback(k, StatePair(A, b, pair.state_id), Z)
        if backtrack:
            # let the step grow again before the next iteration
            L = np.maximum(L / 2.0, config.lipschitz_floor)
        if change <= config.tol_inner * max(size, 1e-300):
            break
    if step is not None:
        step.lipschitz[pair.state_id - 1] = float(L.max())
        step.inner_iter = k
    return StatePair(A, b, pair.state_id)


# ---------------------------------------------------------------------------
# state estimation


def apriori_residuals(Y, states: Sequence[StatePair], X) -> np.ndarray:
    return np.array([sem_residual(Y, X, pair) for pair in states])


def estimate_state_apriori(Y, states: Sequence[StatePair], X) -> int:
    """State (1-based) with the smallest SEM residual; ties go to the smallest index."""
    if not states:
        raise InvalidInputError("at least one state is required")
    return int(np.argmin(apriori_residuals(Y, states, X))) + 1


def estimate_state_aposteriori(Y, states: Sequence[StatePair], stats: TrackerStats, X,
                               config: TrackerConfig, step: StepState | None = None):
    """Update every state hypothetically and keep the one that fits ``Y`` best afterwards.

    Returns ``(s_hat, candidates)`` where ``candidates[s-1]`` is the tuple
    ``(pair, stats, residual, step)`` that would result from assigning ``Y`` to ``s``.
    """
    if not states:
        raise InvalidInputError("at least one state is required")
    candidates = []
    for s, pair in enumerate(states, start=1):
        new_stats = update_stats(stats, Y, s, config.beta)
        trial_step = None
        if step is not None:
            trial_step = StepState(step.lipschitz.copy(), step.inner_iter)
        new_pair = ista_inner_solve(pair, new_stats.for_state(s), X, config.lambda_for(s), config, trial_step)
        candidates.append((new_pair, new_stats, sem_residual(Y, X, new_pair), trial_step))
    s_hat = int(np.argmin([c[2] for c in candidates])) + 1
    return s_hat, candidates


# ---------------------------------------------------------------------------
# streaming tracker


@dataclass
class StepResult:
    t: int
    state: int
    residual: float
    skipped: bool = False
    states: list | None = None


@dataclass
class TrackResult:
    states: list
    sigma: SwitchSequence
    residuals: np.ndarray
    history: list | None = None
    skipped: list = field(default_factory=list)
    t_offset: int = 0


class SwitchedTopologyTracker:
    """Streaming tracker: feed one snapshot at a time with :meth:`step`."""

    def __init__(self, X, initial_states: Sequence[StatePair], config: TrackerConfig | None = None,
                 stats: TrackerStats | None = None, t: int = 0, step_state: StepState | None = None):
        if not initial_states:
            raise InvalidInputError("at least one initial state is required")
        self.X = np.asarray(X, dtype=float)
        self.config = config or TrackerConfig()
        n, c = self.X.shape
        self.states = [pair.with_id(s) for s, pair in enumerate(initial_states, start=1)]
        for pair in self.states:
            if pair.n != n:
                raise InvalidInputError(f"state {pair.state_id} has {pair.n} nodes, X has {n} rows")
        self.stats = stats if stats is not None else TrackerStats.zeros(len(self.states), n, c)
        self.t = int(t)
        self.step_state = step_state if step_state is not None else StepState.initial(len(self.states))

    @property
    def n_states(self):
        return len(self.states)

    def step(self, Y, keep_states: bool = False) -> StepResult:
        Y = np.asarray(Y, dtype=float)
        if Y.shape != self.X.shape:
            raise InvalidInputError(f"snapshot shape {Y.shape} does not match X {self.X.shape}")
        if not np.all(np.isfinite(Y)):
            raise InvalidInputError(f"snapshot {self.t + 1} has non-finite entries")
        self.t += 1
        cfg = self.config
        skipped = False
        if cfg.state_criterion == "apriori":
            resid = apriori_residuals(Y, self.states, self.X)
            s_hat = int(np.argmin(resid)) + 1
            residual = float(resid[s_hat - 1])
            try:
                new_stats = update_stats(self.stats, Y, s_hat, cfg.beta)
                new_pair = ista_inner_solve(self.states[s_hat - 1], new_stats.for_state(s_hat), self.X,
                                            cfg.lambda_for(s_hat), cfg, self.step_state)
            except NumericalError as exc:
                logger.warning("t=%d: update of state %d abandoned: %s", self.t, s_hat, exc)
                skipped = True
            else:
                self.stats = new_stats
                self.states[s_hat - 1] = new_pair
        else:
            try:
                s_hat, cands = estimate_state_aposteriori(Y, self.states, self.stats, self.X, cfg, self.step_state)
            except NumericalError as exc:
                logger.warning("t=%d: a posteriori update abandoned: %s", self.t, exc)
                s_hat = estimate_state_apriori(Y, self.states, self.X)
                residual = sem_residual(Y, self.X, self.states[s_hat - 1])
                skipped = True
            else:
                new_pair, new_stats, residual, trial_step = cands[s_hat - 1]
                self.states[s_hat - 1] = new_pair
                self.stats = new_stats
                if trial_step is not None:
                    self.step_state = trial_step
        logger.info("t=%d state=%d residual=%.6g%s", self.t, s_hat, residual, " (skipped)" if skipped else "")
        return StepResult(self.t, s_hat, residual, skipped, list(self.states) if keep_states else None)

    def run(self, snapshots, record_states: bool = False, on_step: Callable | None = None) -> TrackResult:
        t0 = self.t
        sigma, residuals, history, skipped = [], [], [] if record_states else None, []
        for Y in snapshots:
            res = self.step(Y, keep_states=record_states)
            sigma.append(res.state)
            residuals.append(res.residual)
            if res.skipped:
                skipped.append(res.t)
            if record_states:
                history.append(res.states)
            if on_step is not None:
                on_step(self, res)
        return TrackResult(list(self.states), SwitchSequence(np.asarray(sigma, dtype=np.int64), self.n_states),
                           np.asarray(residuals), history, skipped, t0)

    # checkpointing ---------------------------------------------------------

    def save_checkpoint(self, directory) -> Path:
        from .io import write_json, write_matrix_csv, write_states

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        write_matrix_csv(directory / "X.csv", self.X)
        state_entries = write_states(directory / "states", self.states)
        stat_entries = []
        for s, st in enumerate(self.stats.per_state, start=1):
            write_matrix_csv(directory / "stats" / f"omega_{s}.csv", st.omega)
            write_matrix_csv(directory / "stats" / f"ybar_{s}.csv", st.ybar)
            stat_entries.append({"state_id": s, "omega": f"stats/omega_{s}.csv", "ybar": f"stats/ybar_{s}.csv"})
        write_matrix_csv(directory / "stats" / "alpha.csv", [st.alpha for st in self.stats.per_state])
        write_matrix_csv(directory / "stats" / "lipschitz.csv", self.step_state.lipschitz)
        manifest = {
            "format": "switchtrack-checkpoint",
            "version": 1,
            "t": self.t,
            "config": self.config.to_dict(),
            "x": "X.csv",
            "states": [{**e, "a": f"states/{e['a']}", "b": f"states/{e['b']}"} for e in state_entries],
            "stats": stat_entries,
            "alpha": "stats/alpha.csv",
            "lipschitz": "stats/lipschitz.csv",
            "inner_iter": self.step_state.inner_iter,
        }
        path = directory / "checkpoint.json"
        write_json(path, manifest)
        return path

    @classmethod
    def load_checkpoint(cls, directory) -> "SwitchedTopologyTracker":
        from .errors import ParseError
        from .io import read_json, read_matrix_csv, read_states, read_vector_csv

        directory = Path(directory)
        manifest = read_json(directory / "checkpoint.json")
        if manifest.get("format") != "switchtrack-checkpoint":
            raise ParseError(f"{directory}: not a tracker checkpoint")
        X = read_matrix_csv(directory / manifest["x"])
        states = read_states(directory, manifest["states"])
        alpha = read_vector_csv(directory / manifest["alpha"])
        per_state = [
            StateStats(read_matrix_csv(directory / e["omega"]), read_matrix_csv(directory / e["ybar"]), float(a))
            for e, a in zip(manifest["stats"], alpha)
        ]
        step = StepState(read_vector_csv(directory / manifest["lipschitz"]), int(manifest.get("inner_iter", 0)))
        return cls(X, states, TrackerConfig.from_dict(manifest["config"]), TrackerStats(per_state),
                   int(manifest["t"]), step)


def track(snapshots, X, initial_states: Sequence[StatePair], config: TrackerConfig | None = None,
          record_states: bool = False, on_step: Callable | None = None) -> TrackResult:
    """Run the tracker over a whole sequence of snapshots."""
    return SwitchedTopologyTracker(X, initial_states, config).run(snapshots, record_states, on_step)
