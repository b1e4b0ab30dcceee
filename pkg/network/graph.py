import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from models import IndustryRoster, PairTotals, Quarter
from utils.errors import DataError

logger = logging.getLogger(__name__)


def _frozen(matrix: np.ndarray) -> np.ndarray:
    matrix = np.array(matrix, dtype=np.float64)
    matrix.setflags(write=False)
    return matrix


@dataclass(frozen=True)
class QuarterlyGraph:
    """
    Directed weighted payment graph for one quarter.

    `adj[i, j]` is the GBP value paid by industry i to industry j. The edge set
    is the strictly positive off-diagonal entries; a kept self-flow sits on the
    diagonal and only counts towards strength.
    """
    quarter: Quarter
    adj: np.ndarray
    roster: Optional[IndustryRoster] = field(default=None, compare=False)
    label: str = ''

    def __post_init__(self):
        adj = _frozen(self.adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DataError(f"adjacency must be square, got shape {adj.shape}")
        if adj.shape[0] < 2:
            raise DataError("a graph needs at least 2 nodes")
        if not np.all(np.isfinite(adj)) or np.any(adj < 0):
            raise DataError("adjacency entries must be finite and non-negative")
        if self.roster is not None and self.roster.n != adj.shape[0]:
            raise DataError(f"roster has {self.roster.n} industries, adjacency has {adj.shape[0]}")
        object.__setattr__(self, 'adj', adj)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    @property
    def name(self) -> str:
        return self.label or self.quarter.label

    @property
    def edge_mask(self) -> np.ndarray:
        mask = self.adj > 0
        np.fill_diagonal(mask, False)
        return mask

    @property
    def edge_count(self) -> int:
        return int(self.edge_mask.sum())

    def edges(self) -> List[Tuple[int, int, float]]:
        """Edges as (source, dest, weight), in row-major order"""
        rows, cols = np.nonzero(self.edge_mask)
        return [(int(i), int(j), float(self.adj[i, j])) for i, j in zip(rows, cols)]

    def scaled(self, factor: float) -> 'QuarterlyGraph':
        return QuarterlyGraph(self.quarter, self.adj * factor, self.roster, self.label)

    def permuted(self, order: Sequence[int]) -> 'QuarterlyGraph':
        """Graph whose node i is this graph's node order[i]"""
        order = np.asarray(order)
        roster = self.roster.permuted(order) if self.roster is not None else None
        return QuarterlyGraph(self.quarter, self.adj[np.ix_(order, order)], roster, self.label)


@dataclass(frozen=True)
class NormalizedGraph:
    """Row-proportional payment matrix; all-zero rows stay zero"""
    quarter: Quarter
    nadj: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'nadj', _frozen(self.nadj))

    @property
    def n(self) -> int:
        return self.nadj.shape[0]


def build_graph(pair_totals: PairTotals, roster: IndustryRoster) -> QuarterlyGraph:
    """
    Build the quarter's adjacency matrix from summed pair totals

    Args:
        pair_totals: Totals keyed by (source index, dest index), in pence
        roster: Roster that the indices refer to

    Returns:
        The quarterly graph, weights converted to GBP
    """
    n = roster.n
    adj = np.zeros((n, n), dtype=np.float64)
    for (i, j), pence in pair_totals.totals.items():
        if not (0 <= i < n and 0 <= j < n):
            raise DataError(f"pair ({i}, {j}) outside roster of {n} industries")
        adj[i, j] = pence / 100.0
    return QuarterlyGraph(pair_totals.quarter, adj, roster)


def build_graphs(totals: Iterable[PairTotals], roster: IndustryRoster) -> List[QuarterlyGraph]:
    graphs = [build_graph(t, roster) for t in totals]
    logger.info(f"Built {len(graphs)} quarterly graphs over {roster.n} industries")
    return graphs


def row_normalize(graph: QuarterlyGraph) -> NormalizedGraph:
    """Divide each row by its sum; rows without outflow map to zero rows"""
    rowsum = graph.adj.sum(axis=1, keepdims=True)
    nadj = np.divide(graph.adj, rowsum, out=np.zeros_like(graph.adj), where=rowsum > 0)
    return NormalizedGraph(graph.quarter, nadj)


def two_hop(graph: QuarterlyGraph, normalized: bool = True) -> np.ndarray:
    """
    Two-step payment matrix B = M @ M

    Args:
        graph: Quarterly graph
        normalized: Use the row-normalized matrix (feature mode) instead of raw GBP

    Returns:
        n x n matrix with B[i, j] = sum over k of M[i, k] * M[k, j]
    """
    matrix = row_normalize(graph).nadj if normalized else graph.adj
    return matrix @ matrix


def yearly_graph(graphs: Sequence[QuarterlyGraph], year: int) -> QuarterlyGraph:
    """Sum of the year's quarterly graphs, labelled with the year"""
    selected = [g for g in graphs if g.quarter.year == year]
    if not selected:
        raise DataError(f"no quarterly graphs for {year}")
    adj = np.sum([g.adj for g in selected], axis=0)
    return QuarterlyGraph(selected[0].quarter, adj, selected[0].roster, label=str(year))


def graphs_by_year(graphs: Sequence[QuarterlyGraph]) -> Dict[int, List[QuarterlyGraph]]:
    years: Dict[int, List[QuarterlyGraph]] = {}
    for g in sorted(graphs, key=lambda g: g.quarter):
        years.setdefault(g.quarter.year, []).append(g)
    return years
