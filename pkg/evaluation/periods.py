import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from evaluation.experiment import EvaluationReport, SpecMetrics, summarize
from models import Quarter
from utils.errors import ConfigError

logger = logging.getLogger(__name__)

FULL_SAMPLE = 'Full sample'


@dataclass(frozen=True)
class PeriodRow:
    name: str
    years: Optional[Tuple[int, int]]
    metrics: Dict[str, SpecMetrics]

    @property
    def n(self) -> int:
        first = next(iter(self.metrics.values()), None)
        return first.pooled.n if first is not None else 0


@dataclass(frozen=True)
class PeriodBreakdown:
    algorithm: str
    specs: List[str]
    rows: List[PeriodRow]

    def row(self, name: str) -> PeriodRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def improvement(self, name: str, spec: str = 'combined') -> Optional[float]:
        return self.row(name).metrics[spec].improvement_pp


def assign_periods(quarters: Sequence[Quarter], periods: Dict[str, Sequence[int]]) -> Dict[Quarter, str]:
    """
    Map each quarter to the one named period whose [first_year, last_year] covers it

    Raises:
        ConfigError: a quarter is covered by no period or by more than one
    """
    assignment: Dict[Quarter, str] = {}
    for quarter in quarters:
        names = [name for name, (first, last) in periods.items() if first <= quarter.year <= last]
        if not names:
            raise ConfigError(f"test quarter {quarter} is not covered by any evaluation period")
        if len(names) > 1:
            raise ConfigError(f"test quarter {quarter} falls in overlapping periods {names}")
        assignment[quarter] = names[0]
    return assignment


def period_breakdown(report: EvaluationReport, periods: Dict[str, Sequence[int]],
                     algorithm: Optional[str] = None) -> PeriodBreakdown:
    """
    Recompute metrics on each period's pooled test observations

    Args:
        report: Experiment output
        periods: Period name -> [first_year, last_year], in display order
        algorithm: Algorithm to break down; defaults to the headline one

    Returns:
        One row per period plus a full-sample row. A period without test
        observations gets undefined metrics.
    """
    algorithm = algorithm or report.headline
    predictions = report.predictions
    quarters = sorted({Quarter.parse(q) for q in predictions['quarter'].unique()})
    assignment = assign_periods(quarters, periods)
    labels = predictions['quarter'].map({q.label: name for q, name in assignment.items()})

    rows: List[PeriodRow] = []
    for name, (first, last) in periods.items():
        subset = predictions[labels == name]
        if subset.empty:
            logger.warning(f"Period {name!r} has no test observations")
        rows.append(PeriodRow(name, (int(first), int(last)), summarize(subset, algorithm, report.specs)))
    rows.append(PeriodRow(FULL_SAMPLE, None, summarize(predictions, algorithm, report.specs)))
    return PeriodBreakdown(algorithm, list(report.specs), rows)
