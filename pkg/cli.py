"""Command line entry point.

Subcommands:
  simulate  clustered bias assignment, dynamics, regional predictions and metrics
  shuffle   the same with biases permuted uniformly over the graph, next to the clustered run
  regress   linear-regression baseline on a seeded train/evaluation split
  pathlen   sampled (and, for small graphs, exact) average path length of the configured graph
  synth     write a synthetic region table
  sweep     clustered run for each bias strength in `epsilons`

Exit codes: 0 on success, including reported non-convergence; 1 on input or configuration
errors; 2 on numerical errors.
"""
import argparse
import logging
import math
import pathlib
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from . import analysis, reports
from .config import RunConfig, resolve_config
from .dynamics import ConvergenceSettings, RunResult, global_share, init_opinions, run
from .errors import ConfigError, InputError, NumericalError, SimulationError
from .graph import (Graph, WattsStrogatzParams, exact_average_path_length,
                    generate_watts_strogatz, sampled_average_path_length, write_edge_list)
from .population import (AgentAllocation, BiasAssignment, RegionTable, allocate_agents,
                         assign_biases, load_regions, shuffle_biases, split_indices,
                         synthesize_regions, write_regions)
from .seeding import Stream, derive_seed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERICAL = 2


@dataclass
class _Outcome:
    """Result of one pass of the dynamics over an assignment."""
    result: RunResult
    predictions: List[analysis.RegionPrediction]


def _output_dir(cfg: RunConfig, *parts: str) -> pathlib.Path:
    path = pathlib.Path(cfg.output_dir, *parts)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_table(cfg: RunConfig) -> RegionTable:
    if cfg.synthetic:
        return synthesize_regions(cfg.synthetic_params(derive_seed(cfg.seed, Stream.SYNTH)))
    if cfg.regions_path is None:
        raise ConfigError("Either regions_path or synthetic must be set.")
    with open(cfg.regions_path, 'rb') as f:
        return load_regions(f)


def _build_graph(cfg: RunConfig, run_index: int = 0) -> Graph:
    params = WattsStrogatzParams(
        n_nodes=cfg.n_agents,
        k_ring=cfg.k_ring,
        p_rewire=cfg.p_rewire,
        seed=derive_seed(cfg.seed, Stream.GRAPH, run_index))
    return generate_watts_strogatz(params)


def _converge(cfg: RunConfig, g: Graph, assignment: BiasAssignment,
              snapshot_dir: Optional[pathlib.Path]) -> RunResult:
    state = init_opinions(g.n_nodes, 2, cfg.init_point)
    settings = ConvergenceSettings(cfg.tolerance, cfg.max_iterations)

    on_iteration = None
    if snapshot_dir is not None and cfg.snapshot_every:
        snapshot_dir.mkdir(parents=True, exist_ok=True)

        def on_iteration(t, x):
            if t % cfg.snapshot_every == 0:
                with open(snapshot_dir / ('state_%06d.csv' % t), 'w', newline='') as f:
                    reports.write_snapshot(x, f)

    result = run(state, g, assignment, settings, workers=cfg.threads, on_iteration=on_iteration)
    if snapshot_dir is not None and cfg.snapshot_every:
        with open(snapshot_dir / 'state_final.csv', 'w', newline='') as f:
            reports.write_snapshot(result.final_state.values, f)
    return result


def _simulate(cfg: RunConfig, g: Graph, alloc: AgentAllocation, table: RegionTable,
              assignment: BiasAssignment, snapshot_dir: Optional[pathlib.Path]) -> _Outcome:
    result = _converge(cfg, g, assignment, snapshot_dir)
    predictions = analysis.region_means(result.final_state, alloc, table,
                                        threshold=cfg.outcome_threshold)
    return _Outcome(result, predictions)


def _predicted_pct(predictions: Sequence[analysis.RegionPrediction]) -> List[float]:
    return [100.0 * p.predicted_rate for p in predictions if p.predicted_rate is not None]


def _measured_indices(table: RegionTable) -> List[int]:
    return [i for i, r in enumerate(table.records) if r.outcome_rate is not None]


def _write_csv(path: pathlib.Path, writer, *args):
    with open(path, 'w', newline='') as f:
        writer(*args, f)
    logger.info("Wrote %s", path)


def _write_outcome(directory: pathlib.Path, outcome: _Outcome, table: RegionTable):
    _write_csv(directory / 'predictions.csv', reports.write_predictions, outcome.predictions)
    _write_csv(directory / 'histogram.csv', reports.write_histogram,
               analysis.histogram(_predicted_pct(outcome.predictions)))
    measured = [100.0 * r.outcome_rate for r in table.records if r.outcome_rate is not None]
    if measured:
        _write_csv(directory / 'histogram_measured.csv', reports.write_histogram,
                   analysis.histogram(measured))


def _outcome_metrics(outcome: _Outcome, suffix: str = '') -> Dict[str, object]:
    result = outcome.result
    dispersion = analysis.dispersion_report(outcome.predictions)
    metrics = {
        'iterations_used': result.iterations_used,
        'converged': result.converged,
        'final_residual': result.final_residual,
        'stddev_regions': dispersion.stddev,
        'mean_regions': dispersion.mean,
        'global_share': global_share(result.final_state),
    }
    return {k + suffix: v for k, v in metrics.items()}


def _regression(cfg: RunConfig, table: RegionTable):
    """Fit the baseline on a seeded split of the regions with a measured outcome.

    :returns: Evaluation region indices, their predictions, the model and the clamp count.
    :raises InputError: Too few regions carry an outcome.
    """
    measured = _measured_indices(table)
    if len(measured) <= cfg.train_size:
        raise InputError("Regression needs more than %d regions with an outcome, found %d." % (
            cfg.train_size, len(measured)))
    train, evaluate = split_indices(len(measured), cfg.train_size, cfg.eval_size,
                                    derive_seed(cfg.seed, Stream.SPLIT))
    records = table.records
    train_pairs = [(records[measured[i]].predictor_rate, records[measured[i]].outcome_rate)
                   for i in train]
    model = analysis.fit_linear(train_pairs)
    eval_regions = [measured[i] for i in evaluate]
    predicted, clamp_count = analysis.predict_many(
        model, [records[r].predictor_rate for r in eval_regions])
    logger.info("Regression fitted on %d regions: slope %.4f, intercept %.4f",
                model.n_train, model.slope, model.intercept)
    return eval_regions, predicted, model, clamp_count


def _write_metrics(cfg: RunConfig, metrics: Dict[str, object], directory: pathlib.Path):
    with open(directory / 'metrics.txt', 'w') as f:
        reports.write_key_values(metrics, f)
    with open(directory / 'config.txt', 'w') as f:
        reports.write_key_values(cfg.echo(), f, sort=True)
    logger.info("Wrote metrics and configuration to %s", directory)


def _model_error_metrics(table: RegionTable, outcomes: Sequence[_Outcome]) -> Dict[str, object]:
    """Model errors against the measured outcomes, per run and averaged; empty if unmeasured."""
    if not _measured_indices(table):
        return {}
    measured = table.outcome_rates()
    errors = [analysis.compare([p.predicted_rate for p in o.predictions], measured)
              for o in outcomes]
    metrics = {'mse_model': errors[0].mse, 'rmse_model': errors[0].rmse}
    if len(errors) > 1:
        for i, e in enumerate(errors):
            metrics['mse_model_run_%d' % i] = e.mse
        metrics['mse_model_mean'] = math.fsum(e.mse for e in errors) / len(errors)
    return metrics


def cmd_simulate(cfg: RunConfig) -> int:
    """Run the clustered pipeline and write predictions, histograms and metrics."""
    table = _load_table(cfg)
    out = _output_dir(cfg)
    alloc = allocate_agents(table, cfg.n_agents)
    assignment = assign_biases(alloc, table, cfg.epsilon)
    if cfg.export_assignments:
        _write_csv(out / 'assignments.csv', reports.write_assignments, assignment, alloc, table)

    outcomes = []
    for run_index in range(cfg.n_runs):
        g = _build_graph(cfg, run_index)
        if cfg.export_assignments and run_index == 0:
            _write_csv(out / 'graph.txt', write_edge_list, g)
        snapshot_dir = out / 'snapshots' if run_index == 0 else None
        outcomes.append(_simulate(cfg, g, alloc, table, assignment, snapshot_dir))
    primary = outcomes[0]
    _write_outcome(out, primary, table)

    metrics = _outcome_metrics(primary)
    metrics.update(_model_error_metrics(table, outcomes))
    if len(_measured_indices(table)) > cfg.train_size:
        eval_regions, predicted, model, clamp_count = _regression(cfg, table)
        measured = [table.records[r].outcome_rate for r in eval_regions]
        regression = analysis.compare(predicted, measured)
        model_eval = analysis.compare(
            [primary.predictions[r].predicted_rate for r in eval_regions], measured)
        metrics.update({
            'mse_regression': regression.mse,
            'rmse_regression': regression.rmse,
            'mse_model_eval': model_eval.mse,
            'clamp_count': clamp_count,
        })
    elif 'mse_model' in metrics:
        logger.warning("Too few measured regions for the regression baseline")
    _write_metrics(cfg, metrics, out)

    if not primary.result.converged:
        logger.warning("Dynamics did not converge; reported state is the last iterate")
    return EXIT_OK


def cmd_shuffle(cfg: RunConfig) -> int:
    """Compare clustered against uniformly shuffled biases with equal global counts."""
    table = _load_table(cfg)
    out = _output_dir(cfg)
    alloc = allocate_agents(table, cfg.n_agents)
    clustered = assign_biases(alloc, table, cfg.epsilon)
    shuffled = shuffle_biases(clustered, derive_seed(cfg.seed, Stream.SHUFFLE))
    g = _build_graph(cfg)

    metrics: Dict[str, object] = {'count_a': clustered.count_a, 'n_agents': clustered.n_agents}
    for name, assignment in (('clustered', clustered), ('shuffled', shuffled)):
        directory = _output_dir(cfg, name)
        outcome = _simulate(cfg, g, alloc, table, assignment, directory / 'snapshots')
        _write_outcome(directory, outcome, table)
        metrics.update(_outcome_metrics(outcome, suffix='_' + name))
        metrics.update({k + '_' + name: v
                        for k, v in _model_error_metrics(table, [outcome]).items()})
    metrics['stddev_contrast'] = metrics['stddev_regions_clustered'] - \
        metrics['stddev_regions_shuffled']
    logger.info("Regional stddev: clustered %.4f, shuffled %.4f",
                metrics['stddev_regions_clustered'], metrics['stddev_regions_shuffled'])
    _write_metrics(cfg, metrics, out)
    return EXIT_OK


def cmd_regress(cfg: RunConfig) -> int:
    """Fit and evaluate the linear-regression baseline."""
    table = _load_table(cfg)
    if not _measured_indices(table):
        raise InputError("Region table has no outcome column values.")
    out = _output_dir(cfg)
    eval_regions, predicted, model, clamp_count = _regression(cfg, table)
    records = [table.records[r] for r in eval_regions]
    measured = [r.outcome_rate for r in records]
    _write_csv(out / 'regression.csv', reports.write_regression,
               [r.region_id for r in records], [r.predictor_rate for r in records],
               predicted, measured)
    _write_csv(out / 'histogram_regression.csv', reports.write_histogram,
               analysis.histogram([100.0 * y for y in predicted]))
    _write_csv(out / 'histogram_measured.csv', reports.write_histogram,
               analysis.histogram([100.0 * m for m in measured]))

    errors = analysis.compare(predicted, measured)
    metrics = {
        'slope': model.slope,
        'intercept': model.intercept,
        'n_train': model.n_train,
        'n_eval': len(eval_regions),
        'mse_regression': errors.mse,
        'rmse_regression': errors.rmse,
        'clamp_count': clamp_count,
    }
    _write_metrics(cfg, metrics, out)
    return EXIT_OK


def cmd_pathlen(cfg: RunConfig) -> int:
    """Measure the average path length of the configured graph."""
    g = _build_graph(cfg)
    n_sources = min(cfg.n_sources, g.n_nodes)
    if n_sources < cfg.n_sources:
        logger.warning("Requested %d BFS sources but the graph has %d nodes; using all nodes",
                       cfg.n_sources, g.n_nodes)
    metrics: Dict[str, object] = {
        'n_nodes': g.n_nodes,
        'n_edges': g.n_edges,
        'n_sources': n_sources,
        'sampled_path_length': sampled_average_path_length(
            g, n_sources, derive_seed(cfg.seed, Stream.SOURCES), workers=cfg.threads),
    }
    if g.n_nodes <= cfg.exact_path_limit:
        metrics['exact_path_length'] = exact_average_path_length(g, workers=cfg.threads)
    reports.write_key_values(metrics, sys.stdout)
    _write_metrics(cfg, metrics, _output_dir(cfg))
    return EXIT_OK


def cmd_synth(cfg: RunConfig) -> int:
    """Write a synthetic region table."""
    table = synthesize_regions(cfg.synthetic_params(derive_seed(cfg.seed, Stream.SYNTH)))
    out = _output_dir(cfg)
    _write_csv(out / 'regions.csv', write_regions, table)
    with open(out / 'config.txt', 'w') as f:
        reports.write_key_values(cfg.echo(), f, sort=True)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig) -> int:
    """Repeat the clustered pipeline for every bias strength in `epsilons`."""
    table = _load_table(cfg)
    out = _output_dir(cfg)
    alloc = allocate_agents(table, cfg.n_agents)
    g = _build_graph(cfg)
    has_outcomes = bool(_measured_indices(table))

    rows = []
    for epsilon in cfg.epsilons:
        outcome = _simulate(cfg, g, alloc, table, assign_biases(alloc, table, epsilon), None)
        metrics = _outcome_metrics(outcome)
        mse_model = (analysis.mse([p.predicted_rate for p in outcome.predictions],
                                  table.outcome_rates()) if has_outcomes else '')
        rows.append((epsilon, mse_model, metrics['stddev_regions'], metrics['global_share'],
                     metrics['iterations_used'], 'true' if metrics['converged'] else 'false'))
        logger.info("epsilon=%g: stddev %.4f, global share %.4f", epsilon,
                    metrics['stddev_regions'], metrics['global_share'])
    _write_csv(out / 'sweep.csv', reports.write_rows,
               ['epsilon', 'mse_model', 'stddev_regions', 'global_share', 'iterations_used',
                'converged'], rows)
    with open(out / 'config.txt', 'w') as f:
        reports.write_key_values(cfg.echo(), f, sort=True)
    return EXIT_OK


_COMMANDS = {
    'simulate': cmd_simulate,
    'shuffle': cmd_shuffle,
    'regress': cmd_regress,
    'pathlen': cmd_pathlen,
    'synth': cmd_synth,
    'sweep': cmd_sweep,
}


def _key_value(raw: str) -> Tuple[str, str]:
    key, sep, value = raw.partition('=')
    if not sep or not key.strip():
        raise argparse.ArgumentTypeError("expected KEY=VALUE, got %r" % raw)
    return key.strip(), value


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', metavar='PATH', help="key=value configuration file")
    common.add_argument('--seed', type=int, help="64-bit unsigned run seed")
    common.add_argument('--threads', type=int, help="worker threads for dynamics and BFS")
    common.add_argument('--output', metavar='DIR', help="output directory")
    common.add_argument('--snapshot-every', type=int, metavar='N',
                        help="write the opinion state every N iterations")
    common.add_argument('--synthetic', action='store_true', default=None,
                        help="use the synthetic region generator instead of a region file")
    common.add_argument('--regions', metavar='PATH', help="region CSV file")
    common.add_argument('--n-sources', type=int, metavar='N', help="BFS sources for pathlen")
    common.add_argument('--train-size', type=int, metavar='N', help="regression training size")
    common.add_argument('--set', type=_key_value, action='append', default=[],
                        metavar='KEY=VALUE', help="override any configuration key")
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true')
    verbosity.add_argument('-q', '--quiet', action='store_true')

    parser = argparse.ArgumentParser(
        prog='multipolar_segregation',
        description="Multipolar opinion dynamics on small-world graphs.")
    subparsers = parser.add_subparsers(dest='command', required=True)
    for name, handler in _COMMANDS.items():
        subparsers.add_parser(name, parents=[common], help=handler.__doc__)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, object]:
    overrides: Dict[str, object] = dict(args.set)
    overrides.update({
        'seed': args.seed,
        'threads': args.threads,
        'output_dir': args.output,
        'snapshot_every': args.snapshot_every,
        'synthetic': args.synthetic,
        'regions_path': args.regions,
        'n_sources': args.n_sources,
        'train_size': args.train_size,
    })
    return overrides


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on usage errors, which is reserved for numerical failures
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level,
                        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")

    try:
        if args.config:
            with open(args.config) as f:
                cfg = resolve_config(f, _overrides(args))
        else:
            cfg = resolve_config(None, _overrides(args))
        return _COMMANDS[args.command](cfg)
    except NumericalError as e:
        logger.error("%s", e)
        return EXIT_NUMERICAL
    except (SimulationError, OSError) as e:
        logger.error("%s", e)
        return EXIT_INPUT
