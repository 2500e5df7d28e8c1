"""``switchtrack`` command line interface.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import json
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import ConfigError, DataError, SwitchTrackError, UndefinedMetricError
from .io import (
    load_dataset,
    read_json,
    read_matrix_csv,
    read_sigma,
    read_states,
    save_dataset,
    write_json,
    write_matrix_csv,
    write_sigma,
    write_states,
)

logger = logging.getLogger("switchtrack")

METRICS_SCHEMA = "switchtrack-metrics"
METRICS_VERSION = 1
LOCK_NAME = ".switchtrack.lock"


class _JsonLines(logging.Handler):
    def __init__(self, path):
        super().__init__(logging.DEBUG)
        self.fh = open(path, "a")

    def emit(self, record):
        self.fh.write(json.dumps({"level": record.levelname, "logger": record.name, "msg": record.getMessage()}) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()
        super().close()


@contextmanager
def output_dir(path, verbosity=0):
    """Create ``path`` and hold a lockfile in it for the duration of a command."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lock = path / LOCK_NAME
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"{path} is in use by another run (remove {lock} if stale)") from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    handler = None
    if verbosity >= 2:
        handler = _JsonLines(path / "events.jsonl")
        logging.getLogger("switchtrack").addHandler(handler)
    try:
        yield path
    finally:
        if handler is not None:
            logging.getLogger("switchtrack").removeHandler(handler)
            handler.close()
        lock.unlink(missing_ok=True)


def _metrics_doc(command, config, **extra):
    return {"schema": METRICS_SCHEMA, "schema_version": METRICS_VERSION, "version": __version__,
            "command": command, "config": config, **extra}


def _load_experiment(config_path, seed):
    from .config import load_config

    cfg = load_config(config_path)
    return cfg.with_seed(seed) if seed is not None else cfg


def _resolve_out(out, cfg, default):
    out = out or cfg.output_dir or default
    if out is None:
        raise ConfigError("no output directory: pass --out or set output_dir")
    return out


def _write_residuals(path, ts, states, residuals):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write("t,state,residual\n")
        fh.writelines(f"{t},{s},{'%.17g' % r}\n" for t, s, r in zip(ts, states, residuals))


def _write_results(out, states, sigma, n_states):
    entries = write_states(Path(out) / "states", states)
    write_sigma(Path(out) / "sigma_est.csv", sigma)
    return {"n_states": n_states, "states": [{**e, "a": f"states/{e['a']}", "b": f"states/{e['b']}"} for e in entries],
            "sigma": "sigma_est.csv"}


def evaluate_estimates(truth_states, truth_sigma, est_states, est_sigma, threshold=1e-4):
    """Accuracy after label alignment, plus per-state relative error and support F1."""
    from .metrics import align_labels, relative_error, support_f1

    n_states = max(len(truth_states), len(est_states))
    mapping, acc = align_labels(truth_sigma, est_sigma, n_states)
    rows = []
    for k, est in enumerate(est_states, start=1):
        s_true = mapping[k - 1]
        if s_true > len(truth_states):
            continue
        truth = truth_states[s_true - 1]
        try:
            err = relative_error(truth, est)
        except UndefinedMetricError:
            err = float("nan")
        p, r, f1 = support_f1(truth.a, est.a, threshold)
        rows.append({"estimated_state": k, "true_state": s_true, "relative_error": err,
                     "precision": p, "recall": r, "f1": f1})
    return {"state_accuracy": acc, "label_map": list(mapping), "threshold": threshold, "states": rows}


@click.group()
@click.version_option(__version__, prog_name="switchtrack")
@click.option("-v", "--verbose", count=True, help="-v for per-interval progress, -vv adds a JSONL event log.")
@click.pass_context
def cli(ctx, verbose):
    """Identify and track switching network topologies from cascade data."""
    level = logging.WARNING if verbose == 0 else logging.INFO if verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    logging.getLogger("switchtrack").setLevel(level)
    ctx.obj = {"verbose": verbose}


@cli.command()
@click.option("--config", "config_path", type=click.Path(), help="TOML or JSON experiment config.")
@click.option("--out", type=click.Path(), help="Dataset directory.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), help="Overrides rng_seed.")
@click.pass_context
def generate(ctx, config_path, out, seed):
    """Generate a synthetic switched-SEM dataset."""
    from .sem import generate_dataset

    cfg = _load_experiment(config_path, seed)
    out = _resolve_out(out, cfg, None)
    with output_dir(out, ctx.obj["verbose"]) as d:
        path = save_dataset(d, generate_dataset(cfg.generation))
    click.echo(str(path))


def _tracker_run(dataset, cfg, tcfg, n_states, rng_seed, with_errors=False):
    """Batch initialization on the first t_init intervals, then streaming tracking.

    With ``with_errors`` the relative error between the true active state and
    the estimate of the selected state is recorded for every interval.
    """
    from .initializer import batch_initialize
    from .metrics import relative_error
    from .tracker import SwitchedTopologyTracker

    Ys = dataset.Y
    t_init = cfg.ridge.t_init
    if t_init >= len(Ys):
        raise ConfigError(f"t_init={t_init} leaves no interval to track (T={len(Ys)})")
    init_states, model = batch_initialize(Ys, dataset.X, n_states, cfg.ridge, rng_seed,
                                          cfg.clustering.n_init, return_model=True)
    tracker = SwitchedTopologyTracker(dataset.X, init_states, tcfg, t=t_init)
    errors = []
    if with_errors:
        truth, sigma = dataset.states, dataset.sigma.sigma

        def err(t, est):
            try:
                return relative_error(truth[sigma[t - 1] - 1], est)
            except UndefinedMetricError:
                return float("nan")

        errors = [(t, err(t, init_states[s - 1])) for t, s in enumerate(model.assignments, start=1)]
    result = tracker.run(Ys[t_init:], on_step=(lambda trk, res: errors.append((res.t, err(res.t, trk.states[res.state - 1]))))
                         if with_errors else None)
    sigma_est = np.concatenate([model.assignments, result.sigma.sigma])
    return result, sigma_est, errors


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--config", "config_path", type=click.Path())
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1))
@click.option("--mode", type=click.Choice(["stream", "offline"]), default="stream", show_default=True)
@click.option("--criterion", type=click.Choice(["apriori", "aposteriori"]))
@click.pass_context
def track(ctx, manifest, config_path, out, seed, mode, criterion):
    """Initialize from the first intervals and track the rest."""
    cfg = _load_experiment(config_path, seed)
    tcfg = cfg.tracker_config(mode, criterion)
    dataset = load_dataset(manifest)
    n_states = cfg.clustering.n_states
    with output_dir(out, ctx.obj["verbose"]) as d:
        has_truth = dataset.states is not None and dataset.sigma is not None
        result, sigma, errors = _tracker_run(dataset, cfg, tcfg, n_states, cfg.rng_seed, has_truth)
        layout = _write_results(d, result.states, sigma, n_states)
        t0 = cfg.ridge.t_init
        ts = np.arange(t0 + 1, t0 + len(result.sigma) + 1)
        _write_residuals(d / "residuals.csv", ts, result.sigma.sigma, result.residuals)
        evaluation = None
        if has_truth:
            evaluation = evaluate_estimates(dataset.states, dataset.sigma.sigma, result.states, sigma,
                                            cfg.evaluation.get("threshold", 1e-4))
            with open(d / "rel_error.csv", "w", newline="\n") as fh:
                fh.write("t,relative_error\n")
                fh.writelines(f"{t},{'%.17g' % e}\n" for t, e in errors)
            evaluation["final_relative_error"] = errors[-1][1]
        write_json(d / "metrics.json", _metrics_doc(
            "track", cfg.to_dict(), rng_seed=cfg.rng_seed, mode=mode, tracker=tcfg.to_dict(),
            t_init=t0, n_intervals=len(sigma), skipped=result.skipped, results=layout, evaluation=evaluation))
    click.echo(str(Path(out) / "metrics.json"))


@cli.command("cluster-identify")
@click.argument("manifest", type=click.Path())
@click.option("--config", "config_path", type=click.Path())
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1))
@click.pass_context
def cluster_identify_cmd(ctx, manifest, config_path, out, seed):
    """Closed-form estimates per interval, clustered into states."""
    from .closed_form import cluster_identify

    cfg = _load_experiment(config_path, seed)
    dataset = load_dataset(manifest)
    n_states = cfg.clustering.n_states
    t_cluster = min(cfg.clustering.t_cluster, len(dataset.snapshots))
    with output_dir(out, ctx.obj["verbose"]) as d:
        res = cluster_identify(dataset.Y, dataset.X, n_states, t_cluster, cfg.rng_seed, cfg.clustering.n_init)
        layout = _write_results(d, res.states, res.sigma.sigma, n_states)
        write_json(d / "cluster_model.json", res.model.to_dict())
        evaluation = None
        if dataset.states is not None and dataset.sigma is not None:
            evaluation = evaluate_estimates(dataset.states, dataset.sigma.sigma, res.states, res.sigma.sigma,
                                            cfg.evaluation.get("threshold", 1e-4))
        write_json(d / "metrics.json", _metrics_doc(
            "cluster-identify", cfg.to_dict(), rng_seed=cfg.rng_seed, t_cluster=t_cluster,
            n_intervals=len(res.sigma), skipped=[{"t": t, "reason": r} for t, r in res.skipped],
            results=layout, evaluation=evaluation))
    click.echo(str(Path(out) / "metrics.json"))


@cli.command()
@click.argument("results", type=click.Path())
@click.argument("truth_manifest", type=click.Path())
@click.option("--out", type=click.Path(), help="Defaults to RESULTS.")
@click.option("--threshold", type=float, default=1e-4, show_default=True)
@click.pass_context
def evaluate(ctx, results, truth_manifest, out, threshold):
    """Compare a results directory against a ground-truth dataset."""
    results = Path(results)
    doc = read_json(results / "metrics.json")
    layout = doc.get("results")
    if not layout:
        raise DataError(f"{results}/metrics.json lists no results")
    est_states = read_states(results, layout["states"])
    est_sigma = read_sigma(results / layout["sigma"], layout["n_states"])
    truth = load_dataset(truth_manifest)
    if truth.states is None or truth.sigma is None:
        raise DataError("the truth dataset carries no ground-truth states")
    with output_dir(out or results, ctx.obj["verbose"]) as d:
        ev = evaluate_estimates(truth.states, truth.sigma.sigma, est_states, est_sigma.sigma, threshold)
        with open(d / "state_errors.csv", "w", newline="\n") as fh:
            fh.write("estimated_state,true_state,relative_error,precision,recall,f1\n")
            for r in ev["states"]:
                fh.write(",".join(str(r[k]) if isinstance(r[k], int) else "%.17g" % r[k]
                                  for k in ("estimated_state", "true_state", "relative_error",
                                            "precision", "recall", "f1")) + "\n")
        write_json(d / "evaluation.json", _metrics_doc("evaluate", {"threshold": threshold},
                                                       results=str(results), evaluation=ev))
    click.echo(json.dumps({"state_accuracy": ev["state_accuracy"]}))


@cli.command()
@click.argument("manifest", type=click.Path())
@click.option("--config", "config_path", type=click.Path())
@click.option("--out", type=click.Path(), required=True)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1))
@click.option("--parameter", type=click.Choice(["S", "lambda"]), help="Overrides sweep.parameter.")
@click.option("--values", help="Comma-separated values; overrides sweep.values.")
@click.pass_context
def sweep(ctx, manifest, config_path, out, seed, parameter, values):
    """Dispersion over S, or graph statistics over lambda."""
    from .initializer import batch_initialize, ridge_thetas
    from .metrics import dispersion_sweep, graph_stats, largest_drop
    from .tracker import SwitchedTopologyTracker

    cfg = _load_experiment(config_path, seed)
    parameter = parameter or cfg.sweep.parameter
    try:
        vals = [float(v) for v in values.split(",")] if values else list(cfg.sweep.values)
    except ValueError:
        raise ConfigError(f"bad --values {values!r}") from None
    dataset = load_dataset(manifest)
    Ys = dataset.Y
    with output_dir(out, ctx.obj["verbose"]) as d:
        summary = {"parameter": parameter, "values": vals}
        if parameter == "S":
            thetas = ridge_thetas(Ys, dataset.X, cfg.ridge)
            table = dispersion_sweep(thetas, [int(v) for v in vals], cfg.rng_seed, cfg.clustering.n_init)
            with open(d / "sweep.csv", "w", newline="\n") as fh:
                fh.write("S,dispersion\n")
                fh.writelines(f"{s},{'%.17g' % v}\n" for s, v in table)
            summary["dispersion"] = [v for _, v in table]
            summary["largest_drop_at"] = largest_drop(table) if len(table) > 1 else None
        else:
            n_states = cfg.clustering.n_states
            init = batch_initialize(Ys, dataset.X, n_states, cfg.ridge, cfg.rng_seed, cfg.clustering.n_init)
            threshold = cfg.evaluation.get("threshold", 1e-4)
            rows = []
            for lam in vals:
                tcfg = cfg.tracker_config("stream")
                tcfg.lam = lam
                trk = SwitchedTopologyTracker(dataset.X, init, tcfg, t=cfg.ridge.t_init)
                res = trk.run(Ys[cfg.ridge.t_init:])
                for pair in res.states:
                    try:
                        g = graph_stats(pair.a, threshold)
                        rows.append((lam, pair.state_id, g.avg_shortest_path_length, g.diameter,
                                     g.avg_num_neighbors, g.avg_clustering_coefficient))
                    except UndefinedMetricError:
                        rows.append((lam, pair.state_id, np.nan, np.nan, 0.0, 0.0))
            with open(d / "sweep.csv", "w", newline="\n") as fh:
                fh.write("lambda,state,avg_shortest_path_length,diameter,avg_num_neighbors,avg_clustering_coefficient\n")
                for r in rows:
                    fh.write("%.17g,%d,%.17g,%.17g,%.17g,%.17g\n" % r)
        write_json(d / "metrics.json", _metrics_doc("sweep", cfg.to_dict(), rng_seed=cfg.rng_seed, sweep=summary))
    click.echo(str(Path(out) / "sweep.csv"))


@cli.command()
@click.argument("matrix_path", type=click.Path(exists=True))
@click.option("-k", "--k-sparsity", "k", type=click.IntRange(0), default=1, show_default=True)
@click.option("--out", type=click.Path(), help="Write the JSON report here instead of stdout.")
def identifiability(matrix_path, k, out):
    """Rank and Kruskal-rank report for a susceptibility matrix X (CSV)."""
    from .identifiability import check_prop2

    report = check_prop2(read_matrix_csv(matrix_path), k)
    if out:
        write_json(out, report.to_dict())
    else:
        click.echo(report.to_json())


@cli.command()
@click.argument("events", type=click.Path(exists=True))
@click.option("--categories", type=click.Path(exists=True), required=True, help="cascade_id -> category map (CSV or JSON).")
@click.option("--config", "config_path", type=click.Path())
@click.option("--out", type=click.Path(), required=True)
@click.option("--intervals", type=click.IntRange(1))
@click.option("--min-infected", type=click.IntRange(1))
@click.option("--n-categories", type=click.IntRange(1))
@click.pass_context
def preprocess(ctx, events, categories, config_path, out, intervals, min_infected, n_categories):
    """Turn an event log into a dataset directory."""
    from .cascade_io import PreprocessConfig, load_category_map, load_events, preprocess as run

    cfg = _load_experiment(config_path, None)
    opts = dict(cfg.preprocess)
    for key, val in (("n_intervals", intervals), ("min_infected", min_infected), ("n_categories", n_categories)):
        if val is not None:
            opts[key] = val
    try:
        pcfg = PreprocessConfig(category_map=load_category_map(categories), **opts)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    with output_dir(out, ctx.obj["verbose"]) as d:
        path = save_dataset(d, run(load_events(events), pcfg))
    click.echo(str(path))


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="switchtrack", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 2
    except SwitchTrackError as exc:
        click.echo(f"error: {exc}", err=True)
        return exc.exit_code
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
