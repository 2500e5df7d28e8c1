"""Brute-force identifiability checks for small networks.

Rank, Kruskal rank and exhaustive support enumeration for the linear system
``Y^T F = X^T`` with ``F = (I - A^T) B^{-1}``. Column j of F holds ``1/b_j`` on
its diagonal and ``-a_jk / b_j`` elsewhere, so a K-sparse row of A gives a
column with at most K+1 nonzeros, one of them on the diagonal.
"""
from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInputError, ResourceGuardError
from .sem import StatePair, scale_to_radius

RANK_RTOL = 1e-10
MAX_KRUSKAL_COLS = 25
MAX_UNIQUENESS_NODES = 8
RESIDUAL_TOL = 1e-8


def numerical_rank(M, rtol=RANK_RTOL) -> int:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def _full_column_rank(sub, rtol):
    if sub.shape[1] > sub.shape[0]:
        return False
    sv = np.linalg.svd(sub, compute_uv=False)
    return sv[-1] > rtol * sv[0] if sv[0] > 0 else False


def kruskal_rank(M, max_check: int | None = None, rtol=RANK_RTOL) -> int:
    """Largest k such that every set of k columns of ``M`` is linearly independent.

    Enumerates all column subsets, so more than 25 columns require ``max_check``
    to cap the subset size.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InvalidInputError("M must be 2-D")
    r, c = M.shape
    if c > MAX_KRUSKAL_COLS and max_check is None:
        raise ResourceGuardError(f"{c} columns exceed the enumeration guard ({MAX_KRUSKAL_COLS}); set max_check")
    limit = min(r, c) if max_check is None else min(r, c, int(max_check))
    kr = 0
    for k in range(1, limit + 1):
        subsets = np.array(list(itertools.combinations(range(c), k)))
        subs = M[:, subsets].transpose(1, 0, 2)          # n_subsets x r x k
        sv = np.linalg.svd(subs, compute_uv=False)
        ok = (sv[:, 0] > 0) & (sv[:, -1] > rtol * sv[:, 0])
        if not ok.all():
            break
        kr = k
    return kr


@dataclass
class IdentifiabilityReport:
    n: int
    c: int
    k_sparsity: int | None
    rank_x: int
    kruskal_rank_xt: int | None
    prop1_ok: bool
    prop2_ok: bool | None

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        import json

        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def check_prop1(X) -> IdentifiabilityReport:
    """Closed-form identifiability: ``N <= C`` and X of full row rank."""
    X = np.asarray(X, dtype=float)
    n, c = X.shape
    rank = numerical_rank(X)
    return IdentifiabilityReport(n, c, None, rank, None, bool(n <= c and rank == n), None)


def check_prop2(X, K: int, max_check: int | None = None) -> IdentifiabilityReport:
    """Adds the sparse condition ``kr(X^T) >= 2K + 1``."""
    X = np.asarray(X, dtype=float)
    if K < 0:
        raise InvalidInputError("K must be >= 0")
    report = check_prop1(X)
    need = 2 * K + 1
    cap = max_check
    if cap is None and X.shape[0] > MAX_KRUSKAL_COLS:
        # only whether kr reaches 2K+1 matters
        cap = need
    kr = kruskal_rank(X.T, max_check=cap)
    report.k_sparsity = int(K)
    report.kruskal_rank_xt = kr
    report.prop2_ok = bool(kr >= need)
    return report


@dataclass
class UniquenessResult:
    unique: bool                # one and only one sparse solution per column
    certified: bool             # every support of size <= 2K+1 has full column rank
    matches: bool | None        # unique solution equals the reference F
    F: np.ndarray | None        # recovered F when unique
    n_solutions: list           # distinct feasible solutions found per column


def f_matrix(pair: StatePair) -> np.ndarray:
    """``(I - A^T) B^{-1}``."""
    if np.any(pair.b == 0):
        raise InvalidInputError("b has zero entries")
    return (np.eye(pair.n) - pair.a.T) / pair.b[None, :]


def sparse_solutions(Y, X, K: int, tol=RESIDUAL_TOL, rtol=RANK_RTOL) -> UniquenessResult:
    """Enumerate sparse solutions of ``Y^T F = X^T`` column by column.

    A candidate column has the diagonal entry plus at most K others. Supports
    with zero residual but a rank-deficient submatrix admit a continuum of
    solutions and count as non-unique.
    """
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    n = Y.shape[0]
    if Y.shape != X.shape:
        raise InvalidInputError(f"Y {Y.shape} and X {X.shape} differ in shape")
    if n > MAX_UNIQUENESS_NODES:
        raise ResourceGuardError(f"N={n} exceeds the brute-force guard ({MAX_UNIQUENESS_NODES})")
    if K < 0:
        raise InvalidInputError("K must be >= 0")
    Yt = Y.T
    F = np.zeros((n, n))
    unique = True
    certified = True
    counts = []
    for j in range(n):
        rhs = X[j]
        scale = max(np.linalg.norm(rhs), 1e-300)
        others = [k for k in range(n) if k != j]
        found = []
        degenerate = False
        for size in range(0, min(K, n - 1) + 1):
            for extra in itertools.combinations(others, size):
                supp = (j,) + extra
                sub = Yt[:, supp]
                coef, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
                if np.linalg.norm(sub @ coef - rhs) > tol * scale:
                    continue
                if not _full_column_rank(sub, rtol):
                    degenerate = True
                    continue
                if abs(coef[0]) <= tol * max(np.abs(coef).max(), 1e-300):
                    continue        # the diagonal entry must be nonzero
                f = np.zeros(n)
                f[list(supp)] = coef
                if not any(np.allclose(f, g, rtol=1e-6, atol=1e-9) for g in found):
                    found.append(f)
        for size in range(1, min(2 * K, n - 1) + 1):
            for extra in itertools.combinations(others, size):
                if not _full_column_rank(Yt[:, (j,) + extra], rtol):
                    certified = False
                    break
        counts.append(len(found))
        if degenerate or len(found) != 1:
            unique = False
        else:
            F[:, j] = found[0]
    return UniquenessResult(unique, certified, None, F if unique else None, counts)


def verify_sparse_uniqueness(Y, X, K: int, truth: StatePair | None = None) -> bool:
    """True when the sparse solution is unique and equals the model's F.

    The reference is ``truth`` when given; otherwise the closed-form recovery,
    which needs ``N <= C``.
    """
    from .closed_form import closed_form_pair

    res = sparse_solutions(Y, X, K)
    if not res.unique:
        return False
    ref_pair = truth if truth is not None else closed_form_pair(Y, X)
    ref = f_matrix(ref_pair)
    return bool(np.allclose(res.F, ref, rtol=1e-6, atol=1e-8 * max(np.abs(ref).max(), 1.0)))


def lemma1_empirical(n_trials: int, n: int, density: float, rng_seed: int = 0, radius: float = 0.5) -> float:
    """Fraction of random hollow A (spectrally scaled) with ``|det(I - A^T)| > 1e-12``."""
    if n_trials < 1 or n < 1:
        raise InvalidInputError("n_trials and N must be >= 1")
    if not 0.0 <= density <= 1.0:
        raise InvalidInputError("density must lie in [0, 1]")
    rng = np.random.default_rng(rng_seed)
    ok = 0
    for _ in range(n_trials):
        mask = rng.random((n, n)) < density
        A = np.where(mask, rng.uniform(-1.0, 1.0, (n, n)), 0.0)
        np.fill_diagonal(A, 0.0)
        A = scale_to_radius(A, radius)
        ok += abs(np.linalg.det(np.eye(n) - A.T)) > 1e-12
    return ok / n_trials
