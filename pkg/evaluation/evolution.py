import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from models import IndustryRoster, Quarter
from network.features import FeatureOptions, FeatureTable, GlobalFeatures, extract_features
from network.graph import QuarterlyGraph
from utils.errors import DataError

logger = logging.getLogger(__name__)

YEARLY_METRICS = ('density', 'edge_count', 'avg_path_length', 'mean_clustering')


@dataclass(frozen=True)
class YearStats:
    year: int
    quarters: int
    density: float
    edge_count: float
    avg_path_length: Optional[float]
    mean_clustering: float


@dataclass
class EvolutionSummary:
    years: List[YearStats]
    change: Dict[str, Optional[float]]
    volumes: pd.DataFrame
    centrality: pd.DataFrame

    def year_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame([vars(y) for y in self.years])
        return frame[['year', 'quarters'] + list(YEARLY_METRICS)]

    def top_volumes(self, top_n: int) -> pd.DataFrame:
        """Top industries by volume with a closing totals row"""
        top = self.volumes.head(top_n).copy()
        total = pd.DataFrame([{
            'rank': None, 'industry': f"Top {len(top)} total", 'name': '', 'category': '',
            'volume': top['volume'].sum(), 'share_pct': top['share_pct'].sum(),
        }])
        return pd.concat([top, total], ignore_index=True).astype({'rank': 'Int64'})


def percent_change(first: Optional[float], last: Optional[float]) -> Optional[float]:
    if first is None or last is None or first == 0:
        return None
    return (last - first) / first * 100.0


def yearly_network_stats(globals_by_quarter: Mapping[Quarter, GlobalFeatures]) -> List[YearStats]:
    """Mean of each quarterly network indicator within each calendar year"""
    by_year: Dict[int, List[GlobalFeatures]] = {}
    for quarter in sorted(globals_by_quarter):
        by_year.setdefault(quarter.year, []).append(globals_by_quarter[quarter])
    years = []
    for year, items in by_year.items():
        paths = [g.avg_path_length for g in items if g.avg_path_length is not None]
        years.append(YearStats(
            year=year,
            quarters=len(items),
            density=float(np.mean([g.density for g in items])),
            edge_count=float(np.mean([g.edge_count for g in items])),
            avg_path_length=float(np.mean(paths)) if paths else None,
            mean_clustering=float(np.mean([g.mean_clustering for g in items])),
        ))
    return years


def volume_shares(graphs: Sequence[QuarterlyGraph], roster: IndustryRoster) -> pd.DataFrame:
    """
    Industry payment volume as (inflow + outflow) / 2 summed over all quarters,
    with its share of total flows, sorted by volume (ties by roster order)
    """
    adj = np.sum([g.adj for g in graphs], axis=0)
    volume = (adj.sum(axis=0) + adj.sum(axis=1)) / 2.0
    grand = adj.sum()
    share = volume / grand * 100.0 if grand > 0 else np.zeros(roster.n)
    frame = pd.DataFrame({
        'industry': list(roster.codes),
        'name': [roster.name(i) for i in range(roster.n)],
        'category': [roster.category(i) or '' for i in range(roster.n)],
        'volume': volume,
        'share_pct': share,
    })
    frame = frame.iloc[np.lexsort((np.arange(roster.n), -volume))].reset_index(drop=True)
    frame.insert(0, 'rank', np.arange(1, roster.n + 1))
    return frame


def centrality_ranking(features: Sequence[FeatureTable], volumes: pd.DataFrame,
                       roster: IndustryRoster) -> pd.DataFrame:
    """
    Rank industries by mean normalized betweenness next to their volume rank

    rank_gap = volume_rank - centrality_rank, so a positive gap marks an
    industry whose structural role exceeds its payment volume.
    """
    betweenness = np.mean([t.nodes.betweenness_norm for t in features], axis=0)
    order = np.lexsort((np.arange(roster.n), -betweenness))
    centrality_rank = np.empty(roster.n, dtype=np.int64)
    centrality_rank[order] = np.arange(1, roster.n + 1)
    volume_rank = volumes.set_index('industry')['rank'].reindex(list(roster.codes)).to_numpy()
    frame = pd.DataFrame({
        'industry': list(roster.codes),
        'name': [roster.name(i) for i in range(roster.n)],
        'mean_betweenness': betweenness,
        'centrality_rank': centrality_rank,
        'volume_rank': volume_rank,
        'rank_gap': volume_rank - centrality_rank,
    })
    return frame.sort_values('centrality_rank', kind='mergesort').reset_index(drop=True)


def evolution_summary(graphs: Sequence[QuarterlyGraph],
                      features: Optional[Sequence[FeatureTable]] = None,
                      options: Optional[FeatureOptions] = None) -> EvolutionSummary:
    """
    Yearly network statistics, first-to-last-year change, industry volume
    shares and the centrality ranking

    Args:
        graphs: Quarterly graphs sharing one roster
        features: Precomputed feature tables aligned with `graphs`
        options: Feature options used when tables must be computed

    Returns:
        EvolutionSummary
    """
    if not graphs:
        raise DataError("evolution summary needs at least one quarterly graph")
    roster = graphs[0].roster or IndustryRoster.from_codes([str(i) for i in range(graphs[0].n)])
    if features is None:
        features = [extract_features(g, options) for g in graphs]
    years = yearly_network_stats({t.quarter: t.globals for t in features})
    change = {metric: percent_change(getattr(years[0], metric), getattr(years[-1], metric))
              for metric in YEARLY_METRICS}
    volumes = volume_shares(graphs, roster)
    centrality = centrality_ranking(features, volumes, roster)
    logger.info(f"Evolution summary over {len(years)} years ({years[0].year}-{years[-1].year})")
    return EvolutionSummary(years, change, volumes, centrality)
