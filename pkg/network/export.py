import logging
from typing import Optional

import numpy as np
import pandas as pd
import pydot

from network.graph import QuarterlyGraph

logger = logging.getLogger(__name__)

CATEGORY_COLOURS = {
    'Financial & Business': 'red',
    'Manufacturing': 'blue',
    'Trade & Distribution': 'green',
    'Public & Social': 'orange',
    'Primary Industries': 'purple',
    'Other Services': 'grey',
}
DEFAULT_COLOUR = 'lightgrey'
MIN_PENWIDTH = 0.5
MAX_PENWIDTH = 3.0


def _codes(graph: QuarterlyGraph):
    if graph.roster is not None:
        return list(graph.roster.codes)
    return [str(i) for i in range(graph.n)]


def matrix_frame(graph: QuarterlyGraph) -> pd.DataFrame:
    """GBP adjacency as a frame with roster codes on both axes"""
    codes = _codes(graph)
    frame = pd.DataFrame(graph.adj, index=codes, columns=codes)
    frame.index.name = 'source'
    return frame


def to_dot(graph: QuarterlyGraph, comment: Optional[str] = None) -> str:
    """
    Render the graph as DOT for external layout

    Nodes carry the industry code as label, the name as tooltip and a fill
    colour from the roster category. Edges carry the flow in whole GBP as
    weight and a log-scaled pen width.

    Args:
        graph: Graph to export, usually a yearly aggregate
        comment: Graph-level comment, e.g. the run header

    Returns:
        DOT source text
    """
    dot = pydot.Dot(graph_name=f"payments_{graph.name}", graph_type='digraph')
    if comment:
        dot.set('comment', comment)
    codes = _codes(graph)
    roster = graph.roster
    for i, code in enumerate(codes):
        category = roster.category(i) if roster is not None else None
        dot.add_node(pydot.Node(
            f"n{i}",
            label=code,
            tooltip=roster.name(i) if roster is not None else code,
            style='filled',
            fillcolor=CATEGORY_COLOURS.get(category, DEFAULT_COLOUR),
        ))

    edges = graph.edges()
    top = np.log1p(max((w for _, _, w in edges), default=0.0))
    for i, j, weight in edges:
        width = MIN_PENWIDTH + (MAX_PENWIDTH - MIN_PENWIDTH) * (np.log1p(weight) / top if top > 0 else 0.0)
        dot.add_edge(pydot.Edge(f"n{i}", f"n{j}", weight=str(int(round(weight))), penwidth=f"{width:.3f}"))
    logger.debug(f"DOT export of {graph.name}: {graph.n} nodes, {len(edges)} edges")
    return dot.to_string()
