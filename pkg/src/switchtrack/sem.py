"""Switched dynamic SEM: domain types, synthetic state sets and cascade generation.

Each interval t obeys ``Y_t = A Y_t + diag(b) X + E_t`` for the state
``(A, b)`` active at t. Matrices are plain float64 numpy arrays; the small
dataclasses below only add validation and a ``__array__`` hook so that
``np.asarray(snapshot)`` works.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import ConfigError, InvalidInputError, SingularModelError

logger = logging.getLogger(__name__)

# Seed matrices of the four synthetic 64-node Kronecker states.
SEED_MATRICES = {
    "H1": np.array([[1, 1, 0, 0], [1, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]),
    "H2": np.array([[1, 0, 0, 0], [0, 1, 1, 0], [0, 1, 1, 1], [0, 0, 1, 0]]),
    "H3": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 1], [0, 0, 1, 1]]),
    "H4": np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 1, 1], [0, 0, 0, 1]]),
}

# (state, first t, last t), 1-based and inclusive.
PIECEWISE_SCHEDULE = (
    (1, 1, 24),
    (2, 25, 49),
    (3, 50, 74),
    (4, 75, 199),
    (1, 200, 299),
    (2, 300, 699),
    (3, 700, 899),
    (4, 900, 1000),
)

# Condition numbers above this make I - A "singular" for generation purposes.
MAX_CONDITION = 1e12

# spawn keys for independent RNG substreams
_STREAM_STATES, _STREAM_X, _STREAM_SIGMA, _STREAM_NOISE = 1, 2, 3, 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream ``(seed, *key)``; independent of call order."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def _finite_matrix(value, name, ndim=2):
    arr = np.array(value, dtype=float)
    if arr.ndim != ndim:
        raise InvalidInputError(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class StatePair:
    """One network state: hollow adjacency ``a`` and exogenous gains ``b``."""

    a: np.ndarray
    b: np.ndarray
    state_id: int = 1

    def __post_init__(self):
        a = _finite_matrix(self.a, "a")
        b = _finite_matrix(self.b, "b", ndim=1)
        if a.shape != (b.size, b.size):
            raise InvalidInputError(f"a has shape {a.shape} but b has length {b.size}")
        if np.any(np.diag(a) != 0):
            raise InvalidInputError("a must have a zero diagonal")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @classmethod
    def hollow(cls, a, b, state_id=1):
        """Build a pair after zeroing the diagonal of ``a``."""
        a = np.array(a, dtype=float)
        np.fill_diagonal(a, 0.0)
        return cls(a, b, state_id)

    @classmethod
    def zeros(cls, n, state_id=1):
        return cls(np.zeros((n, n)), np.zeros(n), state_id)

    @property
    def n(self) -> int:
        return self.b.size

    @property
    def B(self) -> np.ndarray:
        return np.diag(self.b)

    def with_id(self, state_id):
        return replace(self, state_id=state_id)

    def __eq__(self, other):
        if not isinstance(other, StatePair):
            return NotImplemented
        return (
            self.state_id == other.state_id
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )


@dataclass(frozen=True)
class CascadeSnapshot:
    """Transformed infection times ``y`` (N x C) for interval ``t`` (1-based)."""

    y: np.ndarray
    t: int = 1

    def __post_init__(self):
        object.__setattr__(self, "y", _finite_matrix(self.y, "y"))

    def __array__(self, dtype=None, copy=None):
        return self.y if dtype is None else self.y.astype(dtype)


@dataclass(frozen=True)
class ExogenousMatrix:
    """Node-by-contagion susceptibilities X (N x C), constant over time."""

    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _finite_matrix(self.x, "x"))

    def __array__(self, dtype=None, copy=None):
        return self.x if dtype is None else self.x.astype(dtype)


@dataclass(frozen=True)
class SwitchSequence:
    """Active state per interval, ``sigma[t-1]`` in ``1..n_states``."""

    sigma: np.ndarray
    n_states: int

    def __post_init__(self):
        sigma = np.array(self.sigma)
        if sigma.ndim != 1:
            raise InvalidInputError("sigma must be 1-D")
        if sigma.size and not np.issubdtype(sigma.dtype, np.integer):
            if not np.all(sigma == np.round(sigma)):
                raise InvalidInputError("sigma entries must be integers")
        sigma = sigma.astype(np.int64)
        if self.n_states < 1:
            raise InvalidInputError("n_states must be >= 1")
        if sigma.size and (sigma.min() < 1 or sigma.max() > self.n_states):
            raise InvalidInputError(f"sigma entries must lie in 1..{self.n_states}")
        object.__setattr__(self, "sigma", sigma)

    def __len__(self):
        return self.sigma.size

    def __getitem__(self, t):
        return self.sigma[t]

    def __array__(self, dtype=None, copy=None):
        return self.sigma if dtype is None else self.sigma.astype(dtype)

    def one_hot(self) -> np.ndarray:
        """T x S indicator matrix (each row sums to one)."""
        chi = np.zeros((self.sigma.size, self.n_states))
        chi[np.arange(self.sigma.size), self.sigma - 1] = 1.0
        return chi


@dataclass
class GenerationConfig:
    n_nodes: int = 64
    n_cascades: int = 80
    n_intervals: int = 1000
    n_states: int = 4
    noise_std: float = 0.1
    rng_seed: int = 0
    state_probabilities: list | None = None
    seeds: list = field(default_factory=lambda: ["H1", "H2", "H3", "H4"])
    kron_power: int = 3
    weight_scale: float | None = 0.5
    weight_dist: str = "binary"
    x_range: tuple = (0.0, 3.0)
    b_range: tuple = (0.0, 1.0)
    sequence: str = "iid"
    schedule: list | None = None

    def __post_init__(self):
        for name in ("n_nodes", "n_cascades", "n_intervals", "n_states", "kron_power"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")
        if self.state_probabilities is None:
            self.state_probabilities = [1.0 / self.n_states] * self.n_states
        p = np.asarray(self.state_probabilities, dtype=float)
        if p.shape != (self.n_states,) or np.any(p < 0) or not np.isclose(p.sum(), 1.0):
            raise ConfigError("state_probabilities must be a length-S probability vector")
        if self.sequence not in ("iid", "piecewise"):
            raise ConfigError(f"unknown sequence mode {self.sequence!r}")
        if self.weight_dist not in ("binary", "uniform"):
            raise ConfigError(f"unknown weight_dist {self.weight_dist!r}")
        if len(self.seeds) < self.n_states:
            raise ConfigError(f"{self.n_states} states need as many seed matrices, got {len(self.seeds)}")
        for s in self.seed_matrices():
            if s.shape[0] ** self.kron_power != self.n_nodes:
                raise ConfigError(
                    f"seed of size {s.shape[0]} to power {self.kron_power} does not give {self.n_nodes} nodes"
                )
        self.x_range = tuple(float(v) for v in self.x_range)
        self.b_range = tuple(float(v) for v in self.b_range)

    def seed_matrices(self) -> list[np.ndarray]:
        out = []
        for s in self.seeds[: self.n_states]:
            if isinstance(s, str):
                if s not in SEED_MATRICES:
                    raise ConfigError(f"unknown seed name {s!r}")
                out.append(SEED_MATRICES[s])
            else:
                out.append(np.asarray(s))
        return out

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["seeds"] = [s if isinstance(s, str) else np.asarray(s).tolist() for s in self.seeds]
        d["x_range"], d["b_range"] = list(self.x_range), list(self.b_range)
        d["schedule"] = None if self.schedule is None else [list(seg) for seg in self.schedule]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown generation keys: {sorted(unknown)}")
        return cls(**d)


def kronecker_graph(seed, power: int) -> np.ndarray:
    """``seed ⊗ ... ⊗ seed`` (``power`` factors) with the diagonal zeroed."""
    seed = np.asarray(seed)
    if seed.ndim != 2 or seed.shape[0] != seed.shape[1]:
        raise InvalidInputError("seed must be a square matrix")
    if not np.all((seed == 0) | (seed == 1)):
        raise InvalidInputError("seed must be binary")
    if int(power) < 1:
        raise InvalidInputError("power must be >= 1")
    out = seed.astype(float)
    for _ in range(int(power) - 1):
        out = np.kron(out, seed)
    np.fill_diagonal(out, 0.0)
    return out


def spectral_radius(a) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(a)))) if np.size(a) else 0.0


def scale_to_radius(a, c):
    """Scale ``a`` so that the spectral radius of ``|a|`` equals ``c``."""
    rho = spectral_radius(np.abs(a))
    return a if rho == 0 else a * (c / rho)


def random_state_set(config: GenerationConfig, weight_dist=None) -> list[StatePair]:
    """S Kronecker-supported states with ``b`` drawn i.i.d. uniform."""
    weight_dist = weight_dist or config.weight_dist
    rng = substream(config.rng_seed, _STREAM_STATES)
    lo, hi = config.b_range
    states = []
    for s, seed in enumerate(config.seed_matrices(), start=1):
        a = kronecker_graph(seed, config.kron_power)
        if weight_dist == "uniform":
            a = a * rng.uniform(0.0, 1.0, size=a.shape)
        elif weight_dist != "binary":
            raise InvalidInputError(f"unknown weight_dist {weight_dist!r}")
        if config.weight_scale is not None:
            a = scale_to_radius(a, config.weight_scale)
        b = rng.uniform(lo, hi, size=config.n_nodes)
        states.append(StatePair(a, b, s))
    return states


def random_exogenous(config: GenerationConfig) -> ExogenousMatrix:
    lo, hi = config.x_range
    rng = substream(config.rng_seed, _STREAM_X)
    return ExogenousMatrix(rng.uniform(lo, hi, size=(config.n_nodes, config.n_cascades)))


def piecewise_sequence(n_intervals: int, schedule=PIECEWISE_SCHEDULE, n_states=None) -> SwitchSequence:
    """Piecewise-constant sequence; intervals past the schedule keep the last state."""
    schedule = [tuple(int(v) for v in seg) for seg in schedule]
    sigma = np.zeros(n_intervals, dtype=np.int64)
    for state, first, last in schedule:
        lo, hi = max(first, 1) - 1, min(last, n_intervals)
        if lo < hi:
            sigma[lo:hi] = state
    if np.any(sigma == 0):
        last_state = max(schedule, key=lambda seg: seg[2])[0]
        filled = np.flatnonzero(sigma)
        for t in np.flatnonzero(sigma == 0):
            before = filled[filled < t]
            sigma[t] = sigma[before[-1]] if before.size else last_state
    return SwitchSequence(sigma, n_states or max(seg[0] for seg in schedule))


def sample_switch_sequence(config: GenerationConfig) -> SwitchSequence:
    if config.sequence == "piecewise":
        return piecewise_sequence(config.n_intervals, config.schedule or PIECEWISE_SCHEDULE, config.n_states)
    rng = substream(config.rng_seed, _STREAM_SIGMA)
    p = np.asarray(config.state_probabilities, dtype=float)
    sigma = rng.choice(config.n_states, size=config.n_intervals, p=p / p.sum()) + 1
    return SwitchSequence(sigma, config.n_states)


def factor_state(pair: StatePair):
    """LU factors of ``I - A``; raises SingularModelError when ill-conditioned."""
    m = np.eye(pair.n) - pair.a
    with warnings.catch_warnings():
        # exact singularity is reported below through the condition estimate
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(m, check_finite=False)
    anorm = np.linalg.norm(m, 1)
    rcond, info = linalg.lapack.dgecon(lu, anorm, norm="1")
    if info != 0 or rcond == 0 or 1.0 / rcond > MAX_CONDITION:
        raise SingularModelError(
            f"I - A is singular for state {pair.state_id} (condition estimate "
            f"{np.inf if rcond == 0 else 1.0 / rcond:.3g})",
            state=pair.state_id,
        )
    return lu, piv


def generate_cascades(states: Sequence[StatePair], X, sigma, noise_std: float, rng_seed: int) -> list[CascadeSnapshot]:
    """``Y_t = (I - A)^{-1} (diag(b) X + E_t)`` for each interval of ``sigma``.

    ``E_t`` comes from the substream ``(rng_seed, t)`` so each interval can be
    generated independently of the others.
    """
    X = np.asarray(X, dtype=float)
    sigma = sigma if isinstance(sigma, SwitchSequence) else SwitchSequence(sigma, len(states))
    if sigma.n_states > len(states):
        raise InvalidInputError(f"sigma refers to {sigma.n_states} states but {len(states)} were given")
    if noise_std < 0:
        raise InvalidInputError("noise_std must be >= 0")
    for pair in states:
        if pair.n != X.shape[0]:
            raise InvalidInputError(f"state {pair.state_id} has {pair.n} nodes but X has {X.shape[0]} rows")
    factors = {}
    snapshots = []
    for t, s in enumerate(sigma.sigma, start=1):
        pair = states[s - 1]
        if s not in factors:
            factors[s] = factor_state(pair)
        rhs = pair.b[:, None] * X
        if noise_std > 0:
            rhs = rhs + substream(rng_seed, _STREAM_NOISE, t).normal(0.0, noise_std, size=X.shape)
        snapshots.append(CascadeSnapshot(linalg.lu_solve(factors[s], rhs, check_finite=False), t))
    return snapshots


def sem_residual(Y, X, pair: StatePair) -> float:
    """Frobenius norm of ``Y - A Y - diag(b) X``."""
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if Y.shape != X.shape or Y.ndim != 2 or Y.shape[0] != pair.n:
        raise InvalidInputError(f"shape mismatch: Y {Y.shape}, X {X.shape}, state with {pair.n} nodes")
    return float(np.linalg.norm(Y - pair.a @ Y - pair.b[:, None] * X))


@dataclass
class Dataset:
    """Everything one synthetic or preprocessed run needs.

    ``states`` and ``sigma`` are the ground truth and are ``None`` for real data.
    """

    X: np.ndarray
    snapshots: list
    states: list | None = None
    sigma: SwitchSequence | None = None
    config: dict | None = None
    id_maps: dict | None = None

    @property
    def Y(self) -> list[np.ndarray]:
        return [np.asarray(s) for s in self.snapshots]


def generate_dataset(config: GenerationConfig) -> Dataset:
    states = random_state_set(config)
    X = random_exogenous(config)
    sigma = sample_switch_sequence(config)
    snapshots = generate_cascades(states, X, sigma, config.noise_std, config.rng_seed)
    logger.info("generated %d intervals, N=%d, C=%d, S=%d", len(snapshots), config.n_nodes, config.n_cascades, config.n_states)
    return Dataset(X.x, snapshots, states, sigma, config.to_dict())
