"""
Report tables in Markdown and CSV form.

CSV frames keep raw numbers with empty cells for undefined values. Markdown
tables are pre-formatted strings so the rendered text is stable across
pandas/tabulate versions.
"""
import logging
from typing import Dict, List, Optional, Sequence

import pandas as pd

from evaluation.evolution import YEARLY_METRICS, EvolutionSummary
from evaluation.experiment import EvaluationReport
from evaluation.periods import PeriodBreakdown

logger = logging.getLogger(__name__)

SPEC_LABELS = {
    'traditional': 'Traditional Features Only',
    'network': 'Network Features Only',
    'combined': 'Combined Model',
}

ALGORITHM_LABELS = {
    'forest': 'Random forest',
    'boosted': 'Gradient boosting',
}

UNDEFINED = 'n/a'


def fmt(value: Optional[float], digits: int = 3, signed: bool = False, suffix: str = '') -> str:
    if value is None or pd.isna(value):
        return UNDEFINED
    text = f"{value:+.{digits}f}" if signed else f"{value:.{digits}f}"
    return text + suffix


def _markdown(frame: pd.DataFrame) -> str:
    return frame.to_markdown(index=False, disable_numparse=True)


# Prediction-level results

def metrics_frame(report: EvaluationReport) -> pd.DataFrame:
    """One row per (algorithm, specification) with pooled metrics"""
    rows = []
    for algorithm in report.algorithms:
        for spec in report.specs:
            item = report.metrics[(algorithm, spec)]
            rows.append({
                'algorithm': algorithm,
                'spec': spec,
                'r2': item.pooled.r2,
                'r2_sd': item.r2_sd,
                'rmse': item.pooled.rmse,
                'mae': item.pooled.mae,
                'improvement_pp': item.improvement_pp,
                'n': item.pooled.n,
            })
    return pd.DataFrame(rows)


def dm_frame(report: EvaluationReport) -> pd.DataFrame:
    rows = []
    for row in report.dm:
        result = row.result
        rows.append({
            'algorithm': row.algorithm,
            'model1': row.model1,
            'model2': row.model2,
            'statistic': result.statistic if result else None,
            'p_value': result.p_value if result else None,
            'mean_difference': result.mean_difference if result else None,
            'n': result.n if result else None,
            'indistinguishable': result.indistinguishable if result else None,
            'hac_lag': report.hac_lag,
            'note': row.note,
        })
    return pd.DataFrame(rows, columns=['algorithm', 'model1', 'model2', 'statistic', 'p_value',
                                       'mean_difference', 'n', 'indistinguishable', 'hac_lag', 'note'])


def windows_frame(report: EvaluationReport) -> pd.DataFrame:
    return pd.DataFrame([{
        'window': w.index,
        'test_quarter': w.test_quarter.label,
        'train_quarters': w.train_quarters,
        'train_rows': w.train_rows,
        'test_rows': w.test_rows,
        'flagged': w.flagged,
    } for w in report.windows])


def _dm_text(report: EvaluationReport, algorithm: str) -> str:
    row = report.dm_row(algorithm, 'traditional', 'combined')
    if row is None:
        return f"Diebold-Mariano (traditional vs combined): {UNDEFINED}"
    if row.result is None:
        return f"Diebold-Mariano (traditional vs combined): not computed ({row.note})"
    if row.result.indistinguishable:
        return "Diebold-Mariano (traditional vs combined): forecasts indistinguishable"
    variance = 'plain variance' if report.hac_lag is None else f"HAC lag {report.hac_lag}"
    return (f"Diebold-Mariano (traditional vs combined): DM = {fmt(row.result.statistic, 2)}, "
            f"p = {fmt(row.result.p_value, 4)} ({variance}, n = {row.result.n})")


def accuracy_markdown(report: EvaluationReport, algorithm: str) -> str:
    """Specification rows with R2 +/- across-window sd, RMSE, MAE and the gain over traditional"""
    rows = []
    for spec in report.specs:
        item = report.metrics[(algorithm, spec)]
        r2 = fmt(item.pooled.r2)
        if item.r2_sd is not None and item.pooled.r2 is not None:
            r2 = f"{r2} ± {fmt(item.r2_sd)}"
        delta = '' if spec == 'traditional' else fmt(item.improvement_pp, 1, signed=True, suffix=' pp')
        rows.append({
            'Specification': SPEC_LABELS.get(spec, spec),
            'R²': r2,
            'RMSE (pp)': fmt(item.pooled.rmse, 2),
            'MAE (pp)': fmt(item.pooled.mae, 2),
            'vs. Traditional': delta,
        })
    lines = [
        f"### Forecast performance, {ALGORITHM_LABELS.get(algorithm, algorithm)}",
        '',
        _markdown(pd.DataFrame(rows)),
        '',
        _dm_text(report, algorithm),
        '',
        f"RMSE reduction, combined vs traditional: {fmt(report.rmse_reduction(algorithm), 1, suffix='%')}",
    ]
    return '\n'.join(lines)


def dm_markdown(report: EvaluationReport) -> str:
    frame = dm_frame(report)
    rows = [{
        'Algorithm': r.algorithm,
        'Model 1': SPEC_LABELS.get(r.model1, r.model1),
        'Model 2': SPEC_LABELS.get(r.model2, r.model2),
        'DM': 'indistinguishable' if r.indistinguishable else fmt(r.statistic, 3),
        'p-value': fmt(r.p_value, 4),
        'n': UNDEFINED if pd.isna(r.n) else str(int(r.n)),
    } for r in frame.itertuples()]
    return _markdown(pd.DataFrame(rows, columns=['Algorithm', 'Model 1', 'Model 2', 'DM', 'p-value', 'n']))


# Period breakdown

def periods_frame(breakdown: PeriodBreakdown) -> pd.DataFrame:
    rows = []
    for row in breakdown.rows:
        for spec in breakdown.specs:
            item = row.metrics[spec]
            rows.append({
                'algorithm': breakdown.algorithm,
                'period': row.name,
                'first_year': row.years[0] if row.years else None,
                'last_year': row.years[1] if row.years else None,
                'spec': spec,
                'r2': item.pooled.r2,
                'rmse': item.pooled.rmse,
                'mae': item.pooled.mae,
                'improvement_pp': item.improvement_pp,
                'n': item.pooled.n,
            })
    return pd.DataFrame(rows)


def periods_markdown(breakdown: PeriodBreakdown) -> str:
    rows = []
    for row in breakdown.rows:
        entry = {
            'Period': row.name,
            'Years': f"{row.years[0]}-{row.years[1]}" if row.years else 'all',
            'n': str(row.n),
        }
        for spec in breakdown.specs:
            entry[f"{SPEC_LABELS.get(spec, spec)} R²"] = fmt(row.metrics[spec].pooled.r2)
        entry['Improvement'] = fmt(breakdown.improvement(row.name), 1, signed=True, suffix=' pp')
        rows.append(entry)
    title = f"### Network gains by period, {ALGORITHM_LABELS.get(breakdown.algorithm, breakdown.algorithm)}"
    return f"{title}\n\n{_markdown(pd.DataFrame(rows))}"


# Network structure

def top_volumes_frame(summary: EvolutionSummary, top_n: int) -> pd.DataFrame:
    return summary.top_volumes(top_n)


def volumes_markdown(summary: EvolutionSummary, top_n: int) -> str:
    frame = summary.top_volumes(top_n)
    rows = [{
        'Rank': '' if pd.isna(r.rank) else str(int(r.rank)),
        'Industry': r.industry,
        'Name': r.name,
        'Volume (£bn)': fmt(r.volume / 1e9, 2),
        'Share': fmt(r.share_pct, 1, suffix='%'),
    } for r in frame.itertuples()]
    return f"### Top industries by payment volume\n\n{_markdown(pd.DataFrame(rows))}"


def evolution_frame(summary: EvolutionSummary) -> pd.DataFrame:
    frame = summary.year_frame()
    change = {'year': f"change {summary.years[0].year}-{summary.years[-1].year} (%)", 'quarters': None}
    change.update(summary.change)
    return pd.concat([frame.astype({'year': str}), pd.DataFrame([change])], ignore_index=True)


def evolution_markdown(summary: EvolutionSummary) -> str:
    digits = {'density': 3, 'edge_count': 0, 'avg_path_length': 2, 'mean_clustering': 3}
    labels = {'density': 'Density', 'edge_count': 'Edges', 'avg_path_length': 'Avg path length',
              'mean_clustering': 'Clustering'}
    rows = []
    for year in summary.years:
        entry = {'Year': str(year.year)}
        for metric in YEARLY_METRICS:
            entry[labels[metric]] = fmt(getattr(year, metric), digits[metric])
        rows.append(entry)
    change = {'Year': f"Change {summary.years[0].year}-{summary.years[-1].year}"}
    for metric in YEARLY_METRICS:
        change[labels[metric]] = fmt(summary.change[metric], 1, signed=True, suffix='%')
    rows.append(change)
    return f"### Network structure by year\n\n{_markdown(pd.DataFrame(rows))}"


def centrality_markdown(summary: EvolutionSummary, top_n: int) -> str:
    frame = summary.centrality.head(top_n)
    rows = [{
        'Rank': str(r.centrality_rank),
        'Industry': r.industry,
        'Name': r.name,
        'Mean betweenness': fmt(r.mean_betweenness, 4),
        'Volume rank': str(r.volume_rank),
        'Rank gap': f"{int(r.rank_gap):+d}",
    } for r in frame.itertuples()]
    return f"### Structural importance against volume\n\n{_markdown(pd.DataFrame(rows))}"


# Full report

def render_report(report: EvaluationReport,
                  breakdowns: Sequence[PeriodBreakdown],
                  summary: Optional[EvolutionSummary],
                  top_n: int,
                  header: Dict[str, object]) -> str:
    """
    Assemble the Markdown report

    Args:
        report: Experiment results
        breakdowns: Period breakdowns, one per algorithm
        summary: Network evolution summary, None to leave the structure tables out
        top_n: Rows in the volume and centrality tables
        header: Run identification (config hash, seed, dataset hash)

    Returns:
        Markdown text ending with a newline
    """
    kept = [w for w in report.windows if not w.flagged]
    sections: List[str] = [
        '# Payment network nowcasting report',
        '',
        ' '.join(f"{k}={v}" for k, v in header.items() if v is not None),
        '',
        f"Windows: {len(kept)} evaluated, {len(report.windows) - len(kept)} flagged; "
        f"test quarters {kept[0].test_quarter}-{kept[-1].test_quarter}; "
        f"{len(report.predictions)} pooled test observations.",
        '',
        '## Forecast performance',
    ]
    for algorithm in report.algorithms:
        sections += ['', accuracy_markdown(report, algorithm)]
    sections += ['', '### Diebold-Mariano comparisons', '', dm_markdown(report)]
    sections += ['', '## Performance by period']
    for breakdown in breakdowns:
        sections += ['', periods_markdown(breakdown)]
    if summary is not None:
        sections += ['', '## Network structure', '', volumes_markdown(summary, top_n),
                     '', evolution_markdown(summary), '', centrality_markdown(summary, top_n)]
    return '\n'.join(sections) + '\n'
