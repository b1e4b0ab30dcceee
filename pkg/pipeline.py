import copy
import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, TypeVar

import pandas as pd

from config import ALLOWED_EXTENSIONS, SPECS, RunConfig, config_hash, resolve_jobs
from evaluation.evolution import EvolutionSummary, evolution_summary
from evaluation.experiment import EvaluationReport, rebuild_report, run_experiment
from evaluation.periods import PeriodBreakdown, period_breakdown
from evaluation.report import (centrality_markdown, dm_frame, evolution_frame, metrics_frame,
                               periods_frame, render_report, top_volumes_frame,
                               windows_frame)
from forecasting.dataset import ForecastDataset, assemble, growth_rates
from forecasting.serialization import model_to_dict
from models import IndustryRoster, PairTotals, RejectedLine
from network.export import matrix_frame, to_dot
from network.features import FeatureOptions, FeatureTable, GlobalFeatures, NodeFeatures, extract_all
from network.graph import QuarterlyGraph, build_graphs, graphs_by_year, yearly_graph
from processors.payment_processor import (RosterPolicy, aggregate_quarterly, fill_quarters,
                                          load_roster, parse_records, records_to_csv)
from storage.artifact_storage import ArtifactStorage, read_frame
from synthetic.generator import synth_generate, synth_roster
from utils.errors import ConfigError, DataError, StageError
from utils.file_utils import allowed_file, sha256_file

logger = logging.getLogger(__name__)

T = TypeVar('T')

PREDICTION_DTYPES = {'source': str, 'dest': str, 'quarter': str}


@dataclass
class IngestedData:
    roster: Optional[IndustryRoster]
    totals: List[PairTotals]
    records: int
    rejects: List[RejectedLine]
    input_hash: str


@dataclass
class RunResult:
    report: EvaluationReport
    breakdowns: List[PeriodBreakdown]
    summary: EvolutionSummary
    dataset: ForecastDataset
    output_dir: Path


def open_storage(config: RunConfig, output_dir: Optional[str] = None) -> ArtifactStorage:
    return ArtifactStorage(output_dir or config.paths.output_dir, config_hash(config), config.seed)


def _roster_policy(config: RunConfig) -> RosterPolicy:
    if config.ingestion.roster_policy == 'infer':
        return RosterPolicy('infer')
    return RosterPolicy('fixed', load_roster(config.paths.roster))


def ingest(config: RunConfig) -> IngestedData:
    """
    Read the payment CSV and sum it into a contiguous run of quarterly totals

    Raises:
        ConfigError: the input path does not name a CSV file
        DataError: the file is missing or every data line was rejected
    """
    path = Path(config.paths.input)
    if not allowed_file(path.name, ALLOWED_EXTENSIONS):
        raise ConfigError(f"input must be a .csv file: {path}")
    if not path.exists():
        raise DataError(f"input file not found: {path}")
    policy = _roster_policy(config)
    with open(path, 'rb') as f:
        result = parse_records(f, policy, (config.ingestion.start, config.ingestion.end))
    if not result.records and result.rejects:
        raise DataError(f"all {len(result.rejects)} data lines of {path} were rejected")
    totals: List[PairTotals] = []
    if result.roster is not None and result.records:
        by_quarter = aggregate_quarterly(result.records, result.roster, config.ingestion.keep_self_flows)
        totals = fill_quarters(by_quarter)
    else:
        logger.warning(f"No usable payment records in {path}")
    return IngestedData(result.roster, totals, len(result.records), result.rejects, sha256_file(path))


def build_network(config: RunConfig, data: IngestedData, jobs: int):
    graphs = build_graphs(data.totals, data.roster)
    features = extract_all(graphs, FeatureOptions.from_config(config.features), jobs)
    return graphs, features


def _stage(storage: ArtifactStorage, name: str, fn: Callable[..., T], *args) -> T:
    logger.info(f"Stage {name}")
    try:
        return fn(*args)
    except Exception as e:
        storage.mark_failed(name, e)
        raise StageError(name, e) from e


def cmd_synth(config: RunConfig) -> Path:
    """
    Write a synthetic payments.csv and its roster.csv into the output directory

    Returns:
        Path of the payments file
    """
    base = load_roster(config.paths.roster) if Path(config.paths.roster).exists() else None
    roster = synth_roster(config.synth.sectors, base)
    records = synth_generate(config.synth, config.seed, roster)
    storage = open_storage(config)
    path = storage.save_text('payments.csv', f"# {storage.header}\n{records_to_csv(records)}")
    storage.save_frame('roster.csv', pd.DataFrame({
        'code': list(roster.codes),
        'name': [roster.name(i) for i in range(roster.n)],
        'category': [roster.category(i) or '' for i in range(roster.n)],
    }))
    logger.info(f"Wrote {len(records)} synthetic records for {roster.n} sectors to {path}")
    return path


def _empty_feature_frames():
    nodes = pd.DataFrame(columns=['quarter', 'industry'] + list(NodeFeatures.COLUMNS))
    globals_ = pd.DataFrame(columns=['quarter'] + list(GlobalFeatures.COLUMNS))
    return nodes, globals_


def write_features(storage: ArtifactStorage, graphs: Sequence[QuarterlyGraph],
                   features: Sequence[FeatureTable]):
    """Per-quarter node features, global indicators, adjacency matrices and yearly DOT snapshots"""
    if not graphs:
        nodes, globals_ = _empty_feature_frames()
        storage.save_frame('features.csv', nodes)
        storage.save_frame('globals.csv', globals_)
        return
    codes = list(graphs[0].roster.codes)
    storage.save_frame('features.csv', pd.concat([t.node_frame(codes) for t in features], ignore_index=True))
    storage.save_frame('globals.csv', pd.DataFrame([t.globals_row() for t in features]))
    for graph in graphs:
        storage.save_frame(f"matrices/matrix_{graph.quarter.label}.csv", matrix_frame(graph).reset_index())
    for year in graphs_by_year(graphs):
        storage.save_text(f"dot/network_{year}.dot", to_dot(yearly_graph(graphs, year), comment=storage.header))


def cmd_features(config: RunConfig) -> Path:
    """
    Write feature tables and graph exports for the input file

    An input without usable records yields empty tables and a warning.
    """
    storage = open_storage(config)
    data = ingest(config)
    if not data.totals:
        logger.warning("Input has no payments; writing empty feature tables")
        write_features(storage, [], [])
        return storage.output_dir
    graphs, features = build_network(config, data, resolve_jobs(config.jobs))
    write_features(storage, graphs, features)
    logger.info(f"Features for {len(graphs)} quarters written to {storage.output_dir}")
    return storage.output_dir


def write_reports(storage: ArtifactStorage, report: EvaluationReport,
                  breakdowns: Sequence[PeriodBreakdown], summary: Optional[EvolutionSummary],
                  top_n: int, dataset_hash: Optional[str] = None):
    """Markdown report plus one CSV per table"""
    storage.save_frame('metrics.csv', metrics_frame(report))
    storage.save_frame('dm_tests.csv', dm_frame(report))
    storage.save_frame('windows.csv', windows_frame(report))
    storage.save_frame('periods.csv', pd.concat([periods_frame(b) for b in breakdowns], ignore_index=True))
    if summary is not None:
        storage.save_frame('top_industries.csv', top_volumes_frame(summary, top_n))
        storage.save_frame('evolution.csv', evolution_frame(summary))
        storage.save_frame('centrality_ranking.csv', summary.centrality)
        storage.save_markdown('centrality_ranking.md', centrality_markdown(summary, top_n) + '\n')
    header = {'config_hash': storage.config_hash, 'seed': storage.seed, 'dataset_hash': dataset_hash}
    storage.save_markdown('report.md', render_report(report, breakdowns, summary, top_n, header))


def persist_dataset(storage: ArtifactStorage, dataset: ForecastDataset):
    storage.save_frame('dataset.csv', dataset.to_frame())
    storage.save_json('dataset.schema.json', dataset.schema(storage.config_hash))


def persist_models(storage: ArtifactStorage, report: EvaluationReport):
    """Pooled predictions plus one JSON file per fitted final-window model"""
    storage.save_frame('predictions.csv', report.predictions)
    for (algorithm, spec), model in sorted(report.models.items()):
        storage.save_json(f"models/{algorithm}_{spec}.json", model_to_dict(model))


def cmd_run(config: RunConfig) -> RunResult:
    """
    Full pipeline: ingest, graphs, features, dataset, expanding windows,
    DM tests, period breakdown, evolution summary, reports

    A failing stage leaves a FAILED marker next to whatever was already
    written and raises StageError.
    """
    storage = open_storage(config)
    jobs = resolve_jobs(config.jobs)

    # Records to quarterly graphs
    data = _stage(storage, 'ingest', ingest, config)
    if not data.totals:
        error = DataError("input has no usable payment records")
        storage.mark_failed('ingest', error)
        raise StageError('ingest', error)
    graphs, features = _stage(storage, 'features', build_network, config, data, jobs)

    # One row per (pair, quarter), shared by every specification
    growth = _stage(storage, 'growth', growth_rates, data.totals, config.dataset.clip)
    dataset = _stage(storage, 'dataset', assemble, SPECS, graphs, features, growth,
                     config.dataset, config.features.two_hop_normalized)
    dataset_hash = dataset.dataset_hash()
    _stage(storage, 'persist', persist_dataset, storage, dataset)

    # Expanding windows
    report = _stage(storage, 'experiment', run_experiment, dataset, config.model, config.windows,
                    config.seed, SPECS, jobs, config.evaluation.hac_lag)
    _stage(storage, 'persist', persist_models, storage, report)

    # Tables
    breakdowns = _stage(storage, 'periods', lambda: [
        period_breakdown(report, config.evaluation.periods, algorithm) for algorithm in report.algorithms])
    summary = _stage(storage, 'evolution', evolution_summary, graphs, features)
    _stage(storage, 'report', write_reports, storage, report, breakdowns, summary,
           config.evaluation.top_n, dataset_hash)

    # run.json leaves out paths and the worker count
    run_config = config.to_dict()
    run_config.pop('paths')
    run_config.pop('jobs')
    _stage(storage, 'persist', storage.save_json, 'run.json',
           {'config': run_config, 'dataset_hash': dataset_hash, 'input_hash': data.input_hash})
    storage.clear_failed()
    logger.info(f"Run complete; reports in {storage.output_dir}")
    return RunResult(report, breakdowns, summary, dataset, storage.output_dir)


def load_predictions(storage: ArtifactStorage, path: Optional[str] = None) -> pd.DataFrame:
    filepath = Path(path) if path else storage.path('predictions.csv')
    return read_frame(filepath, dtype=PREDICTION_DTYPES, float_precision='round_trip')


def cmd_dm(config: RunConfig, predictions_path: Optional[str] = None) -> pd.DataFrame:
    """Diebold-Mariano table from a saved prediction table, written to dm_tests.csv"""
    storage = open_storage(config)
    predictions = load_predictions(storage, predictions_path)
    windows = storage.load_frame('windows.csv') if storage.path('windows.csv').exists() else pd.DataFrame()
    report = rebuild_report(predictions, windows, config.evaluation.hac_lag)
    frame = dm_frame(report)
    storage.save_frame('dm_tests.csv', frame)
    for row in report.dm:
        if row.result is not None and not row.result.indistinguishable:
            logger.info(f"DM {row.algorithm} {row.model1} vs {row.model2}: "
                        f"{row.result.statistic:.3f} (p={row.result.p_value:.4f})")
    return frame


def cmd_report(config: RunConfig) -> Path:
    """
    Re-render every report table from the saved predictions and the input file

    Returns:
        Path of report.md
    """
    storage = open_storage(config)
    predictions = load_predictions(storage)
    windows = storage.load_frame('windows.csv', dtype={'test_quarter': str})
    report = rebuild_report(predictions, windows, config.evaluation.hac_lag)
    breakdowns = [period_breakdown(report, config.evaluation.periods, a) for a in report.algorithms]
    summary = None
    data = ingest(config)
    if data.totals:
        graphs, features = build_network(config, data, resolve_jobs(config.jobs))
        summary = evolution_summary(graphs, features)
    run = storage.load_json('run.json') or {}
    write_reports(storage, report, breakdowns, summary, config.evaluation.top_n, run.get('dataset_hash'))
    return storage.path('report.md')


def grid_configs(config: RunConfig) -> List[Dict[str, object]]:
    """Hyperparameter combinations per algorithm; the forest ignores the learning rate"""
    combos: List[Dict[str, object]] = []
    for algorithm in config.model.algorithms:
        rates = config.grid.learning_rate if algorithm == 'boosted' else [None]
        for depth, n_trees, rate in itertools.product(config.grid.max_depth, config.grid.n_trees, rates):
            combos.append({'algorithm': algorithm, 'max_depth': depth, 'n_trees': n_trees, 'learning_rate': rate})
    return combos


def cmd_grid(config: RunConfig) -> pd.DataFrame:
    """Run the experiment once per grid point and write pooled R2 per specification to grid.csv"""
    storage = open_storage(config)
    jobs = resolve_jobs(config.jobs)
    data = ingest(config)
    if not data.totals:
        raise DataError("input has no usable payment records")
    graphs, features = build_network(config, data, jobs)
    dataset = assemble(SPECS, graphs, features, growth_rates(data.totals, config.dataset.clip),
                       config.dataset, config.features.two_hop_normalized)
    rows = []
    for combo in grid_configs(config):
        model = copy.deepcopy(config.model)
        model.algorithms = [combo['algorithm']]
        if combo['algorithm'] == 'forest':
            model.forest.max_depth = combo['max_depth']
            model.forest.n_trees = combo['n_trees']
        else:
            model.boosted.max_depth = combo['max_depth']
            model.boosted.n_rounds = combo['n_trees']
            model.boosted.learning_rate = combo['learning_rate']
        model.validate()
        report = run_experiment(dataset, model, config.windows, config.seed, SPECS, jobs,
                                config.evaluation.hac_lag)
        row = dict(combo)
        for spec in SPECS:
            row[f"r2_{spec}"] = report.metrics[(combo['algorithm'], spec)].pooled.r2
        row['improvement_pp'] = report.metrics[(combo['algorithm'], 'combined')].improvement_pp
        rows.append(row)
        logger.info(f"Grid point {combo}: improvement {row['improvement_pp']}")
    frame = pd.DataFrame(rows)
    storage.save_frame('grid.csv', frame)
    return frame


COMMANDS: Dict[str, Callable[[RunConfig], object]] = {
    'synth': cmd_synth,
    'features': cmd_features,
    'run': cmd_run,
    'dm': cmd_dm,
    'report': cmd_report,
    'grid': cmd_grid,
}


def dispatch(command: str, config: RunConfig, **kwargs) -> object:
    if command not in COMMANDS:
        raise ConfigError(f"unknown command: {command}")
    return COMMANDS[command](config, **kwargs)
