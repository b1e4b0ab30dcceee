"""
Tests for quarterly graph construction, normalization, two-hop paths and exports
"""
import numpy as np
import pydot
import pytest

from models import IndustryRoster, PairTotals, Quarter
from network.export import CATEGORY_COLOURS, matrix_frame, to_dot
from network.features import network_density
from network.graph import (QuarterlyGraph, build_graph, graphs_by_year, row_normalize, two_hop,
                           yearly_graph)
from utils.errors import DataError

Q1 = Quarter(2017, 1)


def test_build_graph_converts_pence_to_pounds():
    roster = IndustryRoster.from_codes(['A', 'B'])
    graph = build_graph(PairTotals(Q1, {(0, 1): 10000}), roster)
    np.testing.assert_array_equal(graph.adj, [[0, 100], [0, 0]])
    assert graph.edge_count == 1


def test_empty_totals_give_zero_matrix():
    graph = build_graph(PairTotals(Q1, {}), IndustryRoster.from_codes(['A', 'B', 'C']))
    assert not graph.adj.any()
    assert graph.edge_count == 0


def test_all_pairs_give_density_one():
    n = 4
    totals = {(i, j): 100 for i in range(n) for j in range(n) if i != j}
    graph = build_graph(PairTotals(Q1, totals), IndustryRoster.from_codes(list('ABCD')))
    assert network_density(graph) == 1.0


def test_graph_validation(make_graph):
    with pytest.raises(DataError):
        make_graph([[0, -1], [0, 0]])
    with pytest.raises(DataError):
        make_graph([[0, 1, 0], [0, 0, 1]])
    with pytest.raises(DataError):
        QuarterlyGraph(Q1, np.zeros((3, 3)), IndustryRoster.from_codes(['A', 'B']))


def test_adjacency_is_read_only(make_graph):
    graph = make_graph([[0, 1], [1, 0]])
    with pytest.raises(ValueError):
        graph.adj[0, 1] = 5.0


def test_self_flow_is_not_an_edge(make_graph):
    graph = make_graph([[7, 1], [0, 0]])
    assert graph.edge_count == 1
    assert graph.edges() == [(0, 1, 1.0)]


def test_row_normalize(make_graph):
    graph = make_graph([[0, 2, 3, 5], [0, 0, 0, 0], [7, 0, 0, 0], [1, 1, 0, 0]])
    nadj = row_normalize(graph).nadj
    np.testing.assert_allclose(nadj[0], [0, 0.2, 0.3, 0.5])
    np.testing.assert_array_equal(nadj[1], [0, 0, 0, 0])
    np.testing.assert_array_equal(nadj[2], [1, 0, 0, 0])


def test_row_normalize_rows_sum_to_one_and_ignore_scale(make_graph, random_digraph):
    rng = np.random.default_rng(1)
    graph = make_graph(random_digraph(rng, 8, 0.5))
    nadj = row_normalize(graph).nadj
    sums = nadj.sum(axis=1)
    active = graph.adj.sum(axis=1) > 0
    np.testing.assert_allclose(sums[active], 1.0, atol=1e-12)
    np.testing.assert_array_equal(row_normalize(graph.scaled(4.0)).nadj, nadj)


def test_row_normalize_is_idempotent_without_zero_rows(make_graph, random_digraph):
    rng = np.random.default_rng(3)
    nadj = row_normalize(make_graph(random_digraph(rng, 6, 1.0))).nadj
    np.testing.assert_allclose(row_normalize(make_graph(nadj)).nadj, nadj, rtol=1e-14)


def test_two_hop_two_cycle(make_graph):
    graph = make_graph([[0, 1], [1, 0]])
    np.testing.assert_array_equal(two_hop(graph, normalized=False), [[1, 0], [0, 1]])


def test_two_hop_single_path(make_graph):
    graph = make_graph([[0, 1, 0], [0, 0, 1], [0, 0, 0]])
    expected = np.zeros((3, 3))
    expected[0, 2] = 1
    np.testing.assert_array_equal(two_hop(graph, normalized=False), expected)


def test_two_hop_matches_triple_loop(make_graph, random_digraph):
    rng = np.random.default_rng(2)
    for trial in range(100):
        n = int(rng.integers(2, 9))
        normalized = trial % 2 == 1
        graph = make_graph(random_digraph(rng, n, float(rng.uniform(0.2, 0.9))))
        matrix = row_normalize(graph).nadj if normalized else graph.adj
        expected = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                expected[i, j] = sum(matrix[i, k] * matrix[k, j] for k in range(n))
        np.testing.assert_allclose(two_hop(graph, normalized=normalized), expected, rtol=1e-9, atol=1e-12)


def test_yearly_graph_sums_quarters(make_graph):
    graphs = [make_graph([[0, q], [1, 0]], quarter=Quarter(2018, q)) for q in (1, 2, 3, 4)]
    graphs.append(make_graph([[0, 100], [0, 0]], quarter=Quarter(2019, 1)))
    year = yearly_graph(graphs, 2018)
    np.testing.assert_array_equal(year.adj, [[0, 10], [4, 0]])
    assert year.name == '2018'
    assert list(graphs_by_year(graphs)) == [2018, 2019]
    with pytest.raises(DataError):
        yearly_graph(graphs, 2020)


def test_matrix_frame_has_codes_on_both_axes(roster):
    adj = np.arange(16, dtype=float).reshape(4, 4)
    np.fill_diagonal(adj, 0)
    frame = matrix_frame(QuarterlyGraph(Q1, adj, roster))
    assert list(frame.columns) == ['A', 'B', 'C', 'D']
    assert list(frame.index) == ['A', 'B', 'C', 'D']
    assert frame.loc['B', 'C'] == 6.0


def test_dot_export_counts_and_colours(roster):
    adj = np.array([[0, 5e9, 0, 1e6], [0, 0, 2e3, 0], [0, 0, 0, 0], [3.0, 0, 0, 0]])
    graph = QuarterlyGraph(Q1, adj, roster, label='2017')
    text = to_dot(graph, comment='config_hash=abc seed=1')
    (dot,) = pydot.graph_from_dot_data(text)
    nodes = [n for n in dot.get_nodes() if n.get_name() not in ('node', 'edge', 'graph')]
    assert len(nodes) == roster.n
    assert len(dot.get_edges()) == graph.edge_count
    colours = {n.get('label').strip('"'): n.get('fillcolor').strip('"') for n in nodes}
    assert colours['B'] == CATEGORY_COLOURS['Financial & Business']
    assert colours['A'] == CATEGORY_COLOURS['Manufacturing']
    assert 'config_hash=abc' in text
