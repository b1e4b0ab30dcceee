import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import SPECS, ModelConfig, WindowConfig
from evaluation.diebold_mariano import DMResult, diebold_mariano
from forecasting.dataset import ForecastDataset, expanding_windows
from forecasting.metrics import MetricSet, evaluate_metrics
from forecasting.trees import EnsembleModel, fit_model
from models import Quarter
from utils.errors import DataError

logger = logging.getLogger(__name__)

# Pairs compared by Diebold-Mariano, (model 1, model 2)
DM_PAIRS = (('traditional', 'combined'), ('traditional', 'network'), ('network', 'combined'))

_STATE: Dict[str, Any] = {}


@dataclass(frozen=True)
class WindowInfo:
    index: int
    test_quarter: Quarter
    train_quarters: int
    train_rows: int
    test_rows: int
    flagged: bool


@dataclass(frozen=True)
class SpecMetrics:
    """Pooled metrics of one (algorithm, specification) with the across-window R2 spread"""
    algorithm: str
    spec: str
    pooled: MetricSet
    r2_sd: Optional[float]
    improvement_pp: Optional[float]


@dataclass(frozen=True)
class DMRow:
    algorithm: str
    model1: str
    model2: str
    result: Optional[DMResult]
    note: str = ''


@dataclass
class EvaluationReport:
    algorithms: List[str]
    specs: List[str]
    windows: List[WindowInfo]
    predictions: pd.DataFrame
    metrics: Dict[Tuple[str, str], SpecMetrics]
    dm: List[DMRow]
    hac_lag: Optional[int] = None
    models: Dict[Tuple[str, str], EnsembleModel] = field(default_factory=dict)

    @property
    def headline(self) -> str:
        return self.algorithms[0]

    def rmse_reduction(self, algorithm: str) -> Optional[float]:
        """Percent RMSE reduction of the combined specification against the traditional one"""
        trad = self.metrics.get((algorithm, 'traditional'))
        comb = self.metrics.get((algorithm, 'combined'))
        if trad is None or comb is None or not trad.pooled.rmse:
            return None
        return (trad.pooled.rmse - comb.pooled.rmse) / trad.pooled.rmse * 100.0

    def dm_row(self, algorithm: str, model1: str, model2: str) -> Optional[DMRow]:
        for row in self.dm:
            if (row.algorithm, row.model1, row.model2) == (algorithm, model1, model2):
                return row
        return None


def prediction_column(algorithm: str, spec: str) -> str:
    return f"pred_{algorithm}_{spec}"


def summarize(predictions: pd.DataFrame, algorithm: str, specs: Sequence[str]) -> Dict[str, SpecMetrics]:
    """
    Pooled metrics per specification over the given prediction rows

    R2 is computed on the pooled residuals. Its spread is the standard
    deviation of per-window R2 values. Improvement is R2 minus the
    traditional R2, in percentage points.
    """
    results: Dict[str, SpecMetrics] = {}
    for spec in specs:
        column = prediction_column(algorithm, spec)
        if len(predictions) < 2:
            results[spec] = SpecMetrics(algorithm, spec, MetricSet.empty(), None, None)
            continue
        pooled = evaluate_metrics(predictions[column], predictions['target'])
        window_r2 = []
        for _, group in predictions.groupby('window', sort=True):
            if len(group) >= 2:
                r2 = evaluate_metrics(group[column], group['target']).r2
                if r2 is not None:
                    window_r2.append(r2)
        r2_sd = float(np.std(window_r2, ddof=1)) if len(window_r2) >= 2 else None
        results[spec] = SpecMetrics(algorithm, spec, pooled, r2_sd, None)

    baseline = results.get('traditional')
    for spec, item in results.items():
        if baseline is not None and baseline.pooled.r2 is not None and item.pooled.r2 is not None:
            improvement = (item.pooled.r2 - baseline.pooled.r2) * 100.0
            results[spec] = SpecMetrics(algorithm, spec, item.pooled, item.r2_sd, improvement)
    return results


def dm_table(predictions: pd.DataFrame, algorithms: Sequence[str], specs: Sequence[str],
             hac_lag: Optional[int] = None) -> List[DMRow]:
    """Diebold-Mariano rows for every algorithm and every comparison pair present in `specs`"""
    rows: List[DMRow] = []
    for algorithm in algorithms:
        for model1, model2 in DM_PAIRS:
            if model1 not in specs or model2 not in specs:
                continue
            e1 = predictions['target'] - predictions[prediction_column(algorithm, model1)]
            e2 = predictions['target'] - predictions[prediction_column(algorithm, model2)]
            try:
                rows.append(DMRow(algorithm, model1, model2, diebold_mariano(e1, e2, hac_lag)))
            except DataError as e:
                logger.warning(f"Diebold-Mariano {algorithm} {model1} vs {model2} not computed: {e}")
                rows.append(DMRow(algorithm, model1, model2, None, str(e)))
    return rows


def _init_worker(state: Dict[str, Any]):
    _STATE.clear()
    _STATE.update(state)


def _window_seed(seed: int, window: int, algorithm: int) -> int:
    return int(np.random.SeedSequence([seed, window, algorithm]).generate_state(1)[0])


def _run_window(task: Tuple[int, List[int], int, bool]) -> Dict[str, Any]:
    index, train_ordinals, test_ordinal, keep_models = task
    ordinals = _STATE['ordinals']
    target = _STATE['target']
    model_config: ModelConfig = _STATE['model']
    train = np.isin(ordinals, train_ordinals)
    test = ordinals == test_ordinal

    fit_rows = train
    eval_rows = None
    if 'boosted' in model_config.algorithms and model_config.boosted.patience is not None:
        last = max(train_ordinals)
        eval_rows = ordinals == last
        fit_rows = train & ~eval_rows

    predictions: Dict[Tuple[str, str], np.ndarray] = {}
    models: Dict[Tuple[str, str], EnsembleModel] = {}
    for a, algorithm in enumerate(model_config.algorithms):
        seed = _window_seed(_STATE['seed'], index, a)
        for spec in _STATE['specs']:
            X, categorical = _STATE['matrices'][spec]
            rows = fit_rows if algorithm == 'boosted' else train
            eval_set = (X[eval_rows], target[eval_rows]) if algorithm == 'boosted' and eval_rows is not None else None
            model = fit_model(algorithm, X[rows], target[rows], categorical,
                              model_config.forest, model_config.boosted, seed,
                              _STATE['schema'][spec], eval_set)
            predictions[(algorithm, spec)] = model.predict(X[test], _STATE['schema'][spec])
            if keep_models:
                models[(algorithm, spec)] = model
    return {'index': index, 'test_rows': np.nonzero(test)[0], 'predictions': predictions, 'models': models}


def run_experiment(dataset: ForecastDataset,
                   model_config: ModelConfig,
                   window_config: WindowConfig,
                   seed: int,
                   specs: Sequence[str] = SPECS,
                   jobs: int = 1,
                   hac_lag: Optional[int] = None) -> EvaluationReport:
    """
    Fit every (algorithm, specification) on each expanding window and
    forecast the window's test quarter

    Windows with fewer than `min_test_rows` test rows are flagged and left out
    of every pooled statistic. Forecast errors from all kept windows are
    pooled, paired by row key, for the Diebold-Mariano comparisons.

    Args:
        dataset: Rows shared by all specifications
        model_config: Algorithms and their hyperparameters
        window_config: First training span and the minimum test size
        seed: Base seed; each (window, algorithm) derives its own
        specs: Specifications to compare
        jobs: Worker processes; windows run in parallel
        hac_lag: Newey-West lag for the DM variance, None for the plain variance

    Returns:
        EvaluationReport
    """
    quarters = dataset.quarters
    splits = expanding_windows(len(quarters), window_config.min_train)
    ordinals = dataset.ordinals
    windows: List[WindowInfo] = []
    tasks = []
    last_kept = None
    for split in splits:
        test_quarter = quarters[split.test]
        train_ordinals = [quarters[p].ordinal for p in split.train]
        test_rows = int((ordinals == test_quarter.ordinal).sum())
        train_rows = int(np.isin(ordinals, train_ordinals).sum())
        flagged = test_rows < window_config.min_test_rows
        windows.append(WindowInfo(split.index, test_quarter, len(split.train), train_rows, test_rows, flagged))
        if flagged:
            logger.warning(f"Window {split.index} ({test_quarter}) has {test_rows} test rows; excluded")
            continue
        tasks.append([split.index, train_ordinals, test_quarter.ordinal, False])
        last_kept = len(tasks) - 1
    if not tasks:
        raise DataError("no expanding window has enough test rows")
    # The final kept window also returns its fitted models
    tasks[last_kept][3] = True

    state = {
        'ordinals': ordinals,
        'target': dataset.target,
        'model': model_config,
        'seed': seed,
        'specs': list(specs),
        'matrices': {spec: dataset.matrix(spec) for spec in specs},
        'schema': {spec: dataset.schema_hash(spec) for spec in specs},
    }
    logger.info(f"Running {len(tasks)} windows x {len(model_config.algorithms)} algorithms x "
                f"{len(specs)} specifications on {jobs} worker(s)")
    if jobs <= 1 or len(tasks) == 1:
        _init_worker(state)
        outputs = [_run_window(tuple(t)) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_init_worker, initargs=(state,)) as executor:
            outputs = list(executor.map(_run_window, [tuple(t) for t in tasks]))
    outputs.sort(key=lambda o: o['index'])

    # Pool test forecasts in window order
    keys = dataset.keys
    frames = []
    models: Dict[Tuple[str, str], EnsembleModel] = {}
    for output in outputs:
        rows = output['test_rows']
        frame = pd.DataFrame({
            'source': [dataset.roster.codes[i] for i in keys['source'].to_numpy()[rows]],
            'dest': [dataset.roster.codes[j] for j in keys['dest'].to_numpy()[rows]],
            'quarter': [Quarter.from_ordinal(int(o)).label for o in ordinals[rows]],
            'window': output['index'],
            'target': dataset.target[rows],
        })
        for algorithm in model_config.algorithms:
            for spec in specs:
                frame[prediction_column(algorithm, spec)] = output['predictions'][(algorithm, spec)]
        frames.append(frame)
        models.update(output['models'])
    predictions = pd.concat(frames, ignore_index=True)

    # Pooled metrics and DM comparisons
    metrics: Dict[Tuple[str, str], SpecMetrics] = {}
    for algorithm in model_config.algorithms:
        for spec, item in summarize(predictions, algorithm, specs).items():
            metrics[(algorithm, spec)] = item
            logger.info(f"{algorithm}/{spec}: R2 {item.pooled.r2} RMSE {item.pooled.rmse} over {item.pooled.n} rows")
    dm_rows = dm_table(predictions, model_config.algorithms, specs, hac_lag)

    return EvaluationReport(list(model_config.algorithms), list(specs), windows, predictions,
                            metrics, dm_rows, hac_lag, models)


def prediction_layout(predictions: pd.DataFrame) -> Tuple[List[str], List[str]]:
    """(algorithms, specs) in column order from the pred_<algorithm>_<spec> columns"""
    algorithms: List[str] = []
    specs: List[str] = []
    for column in predictions.columns:
        if not column.startswith('pred_'):
            continue
        algorithm, _, spec = column[len('pred_'):].partition('_')
        if algorithm not in algorithms:
            algorithms.append(algorithm)
        if spec not in specs:
            specs.append(spec)
    if not algorithms:
        raise DataError("prediction table has no pred_<algorithm>_<spec> columns")
    return algorithms, specs


def rebuild_report(predictions: pd.DataFrame, windows: pd.DataFrame,
                   hac_lag: Optional[int] = None) -> EvaluationReport:
    """
    Recompute metrics and DM rows from a saved prediction table

    Args:
        predictions: Table written by a run (source, dest, quarter, window, target, pred_*)
        windows: Window table written by the same run
        hac_lag: Newey-West lag for the DM variance

    Returns:
        EvaluationReport without fitted models
    """
    algorithms, specs = prediction_layout(predictions)
    infos = [WindowInfo(int(w.window), Quarter.parse(str(w.test_quarter)), int(w.train_quarters),
                        int(w.train_rows), int(w.test_rows), bool(w.flagged))
             for w in windows.itertuples()]
    metrics: Dict[Tuple[str, str], SpecMetrics] = {}
    for algorithm in algorithms:
        for spec, item in summarize(predictions, algorithm, specs).items():
            metrics[(algorithm, spec)] = item
    dm_rows = dm_table(predictions, algorithms, specs, hac_lag)
    return EvaluationReport(algorithms, specs, infos, predictions, metrics, dm_rows, hac_lag)
