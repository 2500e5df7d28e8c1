"""Acceptance criteria, each checked at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""
import time

import numpy as np
import pytest

from switchtrack.closed_form import closed_form_pair
from switchtrack.identifiability import kruskal_rank, lemma1_empirical, verify_sparse_uniqueness
from switchtrack.initializer import RidgeConfig, batch_initialize, ridge_thetas
from switchtrack.io import tree_digests
from switchtrack.metrics import align_labels, dispersion_sweep, graph_stats, largest_drop, relative_error, support_f1
from switchtrack.sem import GenerationConfig, StatePair, generate_dataset
from switchtrack.tracker import (
    StateStats,
    SwitchedTopologyTracker,
    TrackerConfig,
    TrackerStats,
    estimate_state_apriori,
    ista_gradients,
    ista_inner_solve,
    p1_objective,
    soft_threshold,
    update_stats,
)

from conftest import noise_free_y, random_pair


def rel_fro(truth, est):
    num = np.linalg.norm(truth.a - est.a) + np.linalg.norm(truth.b - est.b)
    return num / (np.linalg.norm(truth.a) + np.linalg.norm(truth.b))


def test_criterion_01_closed_form_exact_recovery(report):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for trial in range(100):
        n = (4, 8, 16)[trial % 3]
        X = rng.uniform(0.5, 2.0, (n, n + 4))
        truth = random_pair(rng, n)
        est = closed_form_pair(noise_free_y(truth, X), X)
        worst = max(worst, rel_fro(truth, est))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 10
    report(1, ok, f"max rel err {worst:.2e} (<= 1e-8), {elapsed:.2f} s (< 10 s)")
    assert ok


@pytest.fixture(scope="module")
def synthetic_run():
    start = time.perf_counter()
    ds = generate_dataset(GenerationConfig(rng_seed=0))
    ridge = RidgeConfig(mu=0.01, t_init=50)
    init, model = batch_initialize(ds.Y, ds.X, 4, ridge, rng_seed=0, return_model=True)
    trk = SwitchedTopologyTracker(ds.X, init, TrackerConfig.streaming(0.95), t=50)
    res = trk.run(ds.Y[50:])
    sigma_est = np.concatenate([model.assignments, res.sigma.sigma])
    return ds, res, sigma_est, time.perf_counter() - start


def test_criterion_02_synthetic_tracking(report, synthetic_run):
    ds, res, sigma_est, elapsed = synthetic_run
    truth = ds.sigma.sigma
    mapping, acc = align_labels(truth[900:], sigma_est[900:], 4)
    f1s = [support_f1(ds.states[mapping[k] - 1].a, res.states[k].a, 1e-4)[2] for k in range(4)]
    ok_acc = acc >= 0.90
    ok_f1 = min(f1s) >= 0.7
    ok = ok_acc and ok_f1 and elapsed < 600
    report(2, ok, f"accuracy t=901..1000 {acc:.3f} (>= 0.90), support F1 {np.round(f1s, 3).tolist()} "
                  f"(each >= 0.7), {elapsed:.1f} s (< 600 s)")
    assert ok


def test_criterion_03_piecewise_improvement(report):
    start = time.perf_counter()
    ds = generate_dataset(GenerationConfig(rng_seed=0, sequence="piecewise"))
    sigma = ds.sigma.sigma
    init, model = batch_initialize(ds.Y, ds.X, 4, RidgeConfig(), rng_seed=0, return_model=True)
    e50 = relative_error(ds.states[sigma[49] - 1], init[model.assignments[49] - 1])
    trk = SwitchedTopologyTracker(ds.X, init, TrackerConfig.streaming(0.95), t=50)
    res = trk.run(ds.Y[50:])
    final = relative_error(ds.states[sigma[-1] - 1], res.states[res.sigma.sigma[-1] - 1])
    elapsed = time.perf_counter() - start
    ok = final <= 0.5 * e50 and elapsed < 600
    report(3, ok, f"final rel err {final:.4f}, at t=50 {e50:.4f}, ratio {final / e50:.3f} (<= 0.5), "
                  f"{elapsed:.1f} s (< 600 s)")
    assert ok


def _row_cost(snaps, weights, X, i, a_minus, b_i):
    n = X.shape[0]
    others = np.r_[0 : i - 1, i:n]
    return sum(0.5 * w * np.sum((Y[i - 1] - Y[others].T @ a_minus - b_i * X[i - 1]) ** 2)
               for Y, w in zip(snaps, weights))


def test_criterion_04_gradient_finite_differences(report):
    rng = np.random.default_rng(4)
    start = time.perf_counter()
    h = 1e-6
    worst = 0.0
    for _ in range(50):
        n, c = int(rng.integers(3, 9)), int(rng.integers(3, 10))
        snaps = [rng.normal(size=(n, c)) for _ in range(3)]
        X = rng.uniform(0, 3, (n, c))
        weights = [1.0, 1.0, 1.0]
        stats = StateStats.zeros(n, c)
        for Y in snaps:
            stats = stats.updated(Y)
        pair = StatePair.hollow(rng.normal(size=(n, n)), rng.normal(size=n))
        i = int(rng.integers(1, n + 1))
        ga, gb = ista_gradients(pair, stats, X, i)
        a = np.delete(pair.a[i - 1], i - 1)
        fd = np.empty(n)
        for k in range(n):
            e = np.zeros(n)
            e[k] = h
            fd[k] = (_row_cost(snaps, weights, X, i, a + e[:-1], pair.b[i - 1] + e[-1])
                     - _row_cost(snaps, weights, X, i, a - e[:-1], pair.b[i - 1] - e[-1])) / (2 * h)
        worst = max(worst, np.linalg.norm(np.r_[ga, gb] - fd) / np.linalg.norm(fd))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and elapsed < 5
    report(4, ok, f"max rel err {worst:.2e} (<= 1e-5), {elapsed:.2f} s (< 5 s)")
    assert ok


def test_criterion_05_prox_and_descent(report):
    rng = np.random.default_rng(5)
    grid = np.arange(-100000, 100001) * 1e-4
    prox_err = 0.0
    for _ in range(50):
        g, mu = rng.uniform(-8, 8), rng.uniform(0, 4)
        z = grid[np.argmin(0.5 * (grid - g) ** 2 + mu * np.abs(grid))]
        prox_err = max(prox_err, abs(soft_threshold(np.array([g]), mu)[0] - z))

    n, c, n_states = 12, 16, 2
    X = rng.uniform(0, 3, (n, c))
    truth = [random_pair(rng, n, state_id=s) for s in (1, 2)]
    states = [StatePair.zeros(n, s) for s in (1, 2)]
    stats = TrackerStats.zeros(n_states, n, c)
    cfg = TrackerConfig(lam=0.95, step_rule="exact_lipschitz", max_inner_iters=5)
    violations, checks = 0, 0
    for _ in range(100):
        s = int(rng.integers(1, 3))
        Y = noise_free_y(truth[s - 1], X) + 0.1 * rng.normal(size=(n, c))
        s_hat = estimate_state_apriori(Y, states, X)
        stats = update_stats(stats, Y, s_hat)
        st = stats.for_state(s_hat)
        objs = [p1_objective(states[s_hat - 1], st, X, cfg.lam)]
        new = ista_inner_solve(states[s_hat - 1], st, X, cfg.lam, cfg,
                               callback=lambda k, p, Z: objs.append(p1_objective(p, st, X, cfg.lam)))
        states[s_hat - 1] = new
        for before, after in zip(objs, objs[1:]):
            checks += 1
            violations += after > before * (1 + 1e-12)
    ok = prox_err <= 1e-3 and violations == 0
    report(5, ok, f"prox max abs err {prox_err:.1e} (<= 1e-3), objective increases {violations} of {checks} "
                  f"inner iterations (0)")
    assert ok


def test_criterion_06_recursion_equals_batch(report):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(10):
        n, c, n_states = 6, 8, 3
        snaps = [rng.normal(size=(n, c)) for _ in range(20)]
        labels = rng.integers(1, n_states + 1, 20)
        stats = TrackerStats.zeros(n_states, n, c)
        for Y, s in zip(snaps, labels):
            stats = update_stats(stats, Y, int(s), 1.0)
        for s in range(1, n_states + 1):
            sel = [Y for Y, lab in zip(snaps, labels) if lab == s]
            got = stats.for_state(s)
            if not sel:
                continue
            omega = sum(Y @ Y.T for Y in sel)
            ybar = sum(sel)
            worst = max(worst,
                        np.linalg.norm(got.omega - omega) / np.linalg.norm(omega),
                        np.linalg.norm(got.ybar - ybar) / np.linalg.norm(ybar),
                        abs(got.alpha - len(sel)) / len(sel))
    ok = worst <= 1e-10
    report(6, ok, f"max rel err {worst:.2e} (<= 1e-10)")
    assert ok


def test_criterion_07_identifiability_validators(report):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    kr_eye = kruskal_rank(np.eye(5))
    M = rng.normal(size=(5, 3))
    kr_dup = kruskal_rank(np.column_stack([M[:, 0], M[:, 0], M[:, 1], M[:, 2]]))
    unique = 0
    for _ in range(100):
        X = rng.uniform(0.5, 2.0, (5, 8))
        A = np.zeros((5, 5))
        for i in range(5):
            j = rng.choice([k for k in range(5) if k != i])
            A[i, j] = rng.uniform(-0.4, 0.4)
        pair = StatePair.hollow(A, rng.uniform(0.5, 1.5, 5))
        unique += verify_sparse_uniqueness(noise_free_y(pair, X), X, K=1, truth=pair)
    frac = lemma1_empirical(1000, 6, 0.5, rng_seed=7)
    elapsed = time.perf_counter() - start
    ok = kr_eye == 5 and kr_dup == 1 and unique >= 99 and frac == 1.0 and elapsed < 60
    report(7, ok, f"kr(I5)={kr_eye} (5), kr(dup)={kr_dup} (1), unique {unique}/100 (>= 99), "
                  f"nonsingular fraction {frac} (1.0), {elapsed:.1f} s (< 60 s)")
    assert ok


def test_criterion_08_model_order_elbow(report):
    ds = generate_dataset(GenerationConfig(rng_seed=0, n_intervals=60))
    thetas = ridge_thetas(ds.Y, ds.X, RidgeConfig(mu=0.15, t_init=60))
    sweep = dispersion_sweep(thetas, range(1, 9), rng_seed=0)
    d = dict(sweep)
    at = largest_drop(sweep)
    ok = at <= 4 and d[4] <= d[3] - 0.5
    report(8, ok, f"largest drop at S={at} (<= 4), delta(3)-delta(4) = {d[3] - d[4]:.3f} (>= 0.5)")
    assert ok


def test_criterion_09_graph_statistics(report):
    cycle = np.zeros((4, 4))
    for i in range(4):
        cycle[i, (i + 1) % 4] = cycle[(i + 1) % 4, i] = 1.0
    g4 = graph_stats(cycle)
    k4 = graph_stats(np.ones((4, 4)))
    got = (g4.diameter, g4.avg_shortest_path_length, g4.avg_clustering_coefficient, g4.avg_num_neighbors,
           k4.diameter, k4.avg_shortest_path_length, k4.avg_clustering_coefficient, k4.avg_num_neighbors)
    want = (2, 4 / 3, 0.0, 2.0, 1, 1.0, 1.0, 3.0)
    ok = got == want
    report(9, ok, f"4-cycle (diam, path, clust, nbrs) = {got[:4]}, K4 = {got[4:]}")
    assert ok


def test_criterion_10_cli_determinism(report, tmp_path):
    from switchtrack.cli import main

    cfg = tmp_path / "exp.toml"
    cfg.write_text("rng_seed = 11\n[generation]\nn_intervals = 200\n[clustering]\nn_states = 4\n")
    digests = []
    for k in (1, 2):
        data, run = tmp_path / f"data{k}", tmp_path / f"run{k}"
        assert main(["generate", "--config", str(cfg), "--out", str(data)]) == 0
        assert main(["track", str(data), "--config", str(cfg), "--out", str(run)]) == 0
        digests.append((tree_digests(data), tree_digests(run)))
    n_files = sum(len(d) for d in digests[0])
    ok = digests[0] == digests[1] and n_files > 0
    report(10, ok, f"{n_files} numeric output files, sha256 {'identical' if ok else 'differ'}")
    assert ok
