import heapq
import logging
from dataclasses import dataclass
from itertools import count
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from models import Quarter
from network.graph import QuarterlyGraph

logger = logging.getLogger(__name__)

EIGEN_TOL = 1e-10
EIGEN_MAX_ITER = 1000


@dataclass(frozen=True)
class FeatureOptions:
    weighted_betweenness: bool = False
    eigenvector_direction: str = 'left'

    @classmethod
    def from_config(cls, features_config) -> 'FeatureOptions':
        return cls(features_config.weighted_betweenness, features_config.eigenvector_direction)


@dataclass(frozen=True)
class NodeFeatures:
    """Per-node feature arrays, indexed like the roster"""
    in_degree: np.ndarray
    out_degree: np.ndarray
    in_strength: np.ndarray
    out_strength: np.ndarray
    betweenness: np.ndarray
    betweenness_norm: np.ndarray
    eigenvector: np.ndarray
    clustering: np.ndarray
    eigenvector_converged: bool = True

    COLUMNS = ('in_degree', 'out_degree', 'in_strength', 'out_strength',
               'betweenness', 'betweenness_norm', 'eigenvector', 'clustering')

    def model_features(self) -> Dict[str, np.ndarray]:
        """Per-node values under the names the forecasting dataset uses"""
        return {
            'in_degree': self.in_degree.astype(np.float64),
            'out_degree': self.out_degree.astype(np.float64),
            'log_in_strength': np.log1p(self.in_strength),
            'log_out_strength': np.log1p(self.out_strength),
            'betweenness': self.betweenness_norm,
            'eigenvector': self.eigenvector,
            'clustering': self.clustering,
        }


@dataclass(frozen=True)
class GlobalFeatures:
    density: float
    avg_path_length: Optional[float]
    reachable_fraction: float
    mean_clustering: float
    edge_count: int

    COLUMNS = ('density', 'avg_path_length', 'reachable_fraction', 'mean_clustering', 'edge_count')


@dataclass(frozen=True)
class FeatureTable:
    quarter: Quarter
    nodes: NodeFeatures
    globals: GlobalFeatures

    def node_frame(self, codes) -> pd.DataFrame:
        frame = pd.DataFrame({col: getattr(self.nodes, col) for col in NodeFeatures.COLUMNS})
        frame.insert(0, 'industry', list(codes))
        frame.insert(0, 'quarter', self.quarter.label)
        return frame

    def globals_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {'quarter': self.quarter.label}
        row.update({col: getattr(self.globals, col) for col in GlobalFeatures.COLUMNS})
        return row


def degree_centrality(graph: QuarterlyGraph) -> Tuple[np.ndarray, np.ndarray]:
    """(in_degree, out_degree) counts over the off-diagonal edge set"""
    mask = graph.edge_mask
    return mask.sum(axis=0).astype(np.int64), mask.sum(axis=1).astype(np.int64)


def strength_centrality(graph: QuarterlyGraph) -> Tuple[np.ndarray, np.ndarray]:
    """(in_strength, out_strength): column and row sums of the GBP matrix"""
    return graph.adj.sum(axis=0), graph.adj.sum(axis=1)


def _hop_dependencies(mask: np.ndarray) -> np.ndarray:
    """
    Brandes dependency accumulation for hop-count geodesics, all sources at once.

    Row s of the result holds the dependency of s on every node. The forward
    sweep counts shortest paths level by level; the backward sweep pushes
    (1 + delta) / sigma from each level to its predecessors.
    """
    n = mask.shape[0]
    step = mask.astype(np.float64)
    sigma = np.eye(n)
    reached = np.eye(n, dtype=bool)
    levels = [np.eye(n, dtype=bool)]
    while True:
        arriving = (sigma * levels[-1]) @ step
        frontier = (arriving > 0) & ~reached
        if not frontier.any():
            break
        sigma[frontier] = arriving[frontier]
        reached |= frontier
        levels.append(frontier)

    delta = np.zeros((n, n))
    for depth in range(len(levels) - 1, 0, -1):
        level = levels[depth]
        share = np.divide(1.0 + delta, sigma, out=np.zeros((n, n)), where=level)
        pushed = sigma * (share @ step.T)
        previous = levels[depth - 1]
        delta[previous] += pushed[previous]
    return delta


def _dijkstra_dependencies(graph: QuarterlyGraph, source: int) -> np.ndarray:
    adj = graph.adj
    n = graph.n
    neighbours = [np.nonzero(row)[0] for row in graph.edge_mask]
    sigma = np.zeros(n)
    preds: List[List[int]] = [[] for _ in range(n)]
    order: List[int] = []
    sigma[source] = 1.0
    tie = count()
    heap = [(0.0, next(tie), source, source)]
    done = np.zeros(n, dtype=bool)
    seen = {source: 0.0}
    while heap:
        d, _, pred, v = heapq.heappop(heap)
        if done[v]:
            continue
        if v != pred:
            sigma[v] += sigma[pred]
        done[v] = True
        order.append(v)
        for w in neighbours[v]:
            vw = d + 1.0 / adj[v, w]
            if not done[w] and (w not in seen or vw < seen[w]):
                seen[w] = vw
                heapq.heappush(heap, (vw, next(tie), v, w))
                sigma[w] = 0.0
                preds[w] = [v]
            elif vw == seen.get(w):
                sigma[w] += sigma[v]
                preds[w].append(v)

    delta = np.zeros(n)
    for w in reversed(order):
        for v in preds[w]:
            delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
    return delta


def betweenness_centrality(graph: QuarterlyGraph, weighted: bool = False,
                           normalized: bool = False) -> np.ndarray:
    """
    Shortest-path betweenness by Brandes' algorithm

    Pairs with no path contribute nothing.

    Args:
        graph: Quarterly graph
        weighted: Use edge length 1/w with a Dijkstra sweep instead of hop counts
        normalized: Divide by (n-1)(n-2)

    Returns:
        Betweenness per node
    """
    n = graph.n
    if weighted:
        scores = np.zeros(n)
        for s in range(n):
            delta = _dijkstra_dependencies(graph, s)
            delta[s] = 0.0
            scores += delta
    else:
        delta = _hop_dependencies(graph.edge_mask)
        scores = delta.sum(axis=0) - np.diag(delta)
    if normalized:
        scale = (n - 1) * (n - 2)
        scores = scores / scale if scale > 0 else np.zeros(n)
    return scores


def eigenvector_centrality(graph: QuarterlyGraph, direction: str = 'left') -> Tuple[np.ndarray, bool]:
    """
    Dominant eigenvector of the payment matrix by power iteration

    In 'left' mode a node is important when important nodes pay it
    (x <- x @ adj); 'right' mode uses adj @ x. The iterate is kept at unit
    Euclidean norm, starting from the uniform vector.

    Returns:
        (vector, converged). An empty graph gives zeros and converged=False.
    """
    matrix = graph.adj if direction == 'left' else graph.adj.T
    n = graph.n
    x = np.full(n, 1.0 / np.sqrt(n))
    for _ in range(EIGEN_MAX_ITER):
        nxt = x @ matrix
        norm = np.linalg.norm(nxt)
        if norm == 0.0:
            return np.zeros(n), False
        nxt = nxt / norm
        if np.max(np.abs(nxt - x)) < EIGEN_TOL:
            return nxt, True
        x = nxt
    return x, False


def clustering_from_mask(mask: np.ndarray) -> np.ndarray:
    """Directed-edge share among each node's in- and out-neighbours"""
    mask = mask.astype(np.int64)
    neighbours = ((mask + mask.T) > 0).astype(np.int64)
    np.fill_diagonal(neighbours, 0)
    links = ((neighbours @ mask) * neighbours).sum(axis=1)
    size = neighbours.sum(axis=1)
    possible = size * (size - 1)
    return np.divide(links, possible, out=np.zeros(mask.shape[0]), where=possible > 0)


def clustering_coefficient(graph: QuarterlyGraph) -> np.ndarray:
    return clustering_from_mask(graph.edge_mask)


def network_density(graph: QuarterlyGraph) -> float:
    n = graph.n
    return graph.edge_count / (n * (n - 1))


def average_path_length(graph: QuarterlyGraph) -> Tuple[Optional[float], float]:
    """
    Mean hop distance over ordered pairs i != j with j reachable from i

    Returns:
        (mean or None when nothing is reachable, reachable fraction)
    """
    n = graph.n
    dist = shortest_path(csr_matrix(graph.edge_mask.astype(np.float64)),
                         directed=True, unweighted=True)
    off = ~np.eye(n, dtype=bool)
    reachable = np.isfinite(dist) & off
    pairs = int(reachable.sum())
    fraction = pairs / (n * (n - 1))
    if pairs == 0:
        return None, fraction
    return float(dist[reachable].mean()), fraction


def extract_features(graph: QuarterlyGraph, options: Optional[FeatureOptions] = None) -> FeatureTable:
    """
    Compute every per-node and global feature of one quarterly graph

    Args:
        graph: Quarterly graph
        options: Betweenness weighting and eigenvector direction

    Returns:
        FeatureTable for the graph's quarter
    """
    options = options or FeatureOptions()
    in_degree, out_degree = degree_centrality(graph)
    in_strength, out_strength = strength_centrality(graph)
    betweenness = betweenness_centrality(graph, weighted=options.weighted_betweenness)
    n = graph.n
    scale = (n - 1) * (n - 2)
    betweenness_norm = betweenness / scale if scale > 0 else np.zeros(n)
    eigenvector, converged = eigenvector_centrality(graph, options.eigenvector_direction)
    if not converged and graph.edge_count:
        logger.warning(f"Eigenvector centrality did not converge for {graph.name}")
    clustering = clustering_coefficient(graph)
    path_length, reachable = average_path_length(graph)

    nodes = NodeFeatures(in_degree, out_degree, in_strength, out_strength,
                         betweenness, betweenness_norm, eigenvector, clustering, converged)
    global_features = GlobalFeatures(
        density=network_density(graph),
        avg_path_length=path_length,
        reachable_fraction=reachable,
        mean_clustering=float(clustering.mean()),
        edge_count=graph.edge_count,
    )
    return FeatureTable(graph.quarter, nodes, global_features)


def _extract_task(args) -> FeatureTable:
    graph, options = args
    return extract_features(graph, options)


def extract_all(graphs: List[QuarterlyGraph], options: Optional[FeatureOptions] = None,
                jobs: int = 1) -> List[FeatureTable]:
    """Feature tables for many quarters, in input order; quarters run in parallel when jobs > 1"""
    options = options or FeatureOptions()
    if jobs <= 1 or len(graphs) <= 1:
        tables = [extract_features(g, options) for g in graphs]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            tables = list(executor.map(_extract_task, [(g, options) for g in graphs]))
    logger.info(f"Extracted features for {len(tables)} quarters")
    return tables
