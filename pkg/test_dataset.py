"""
Tests for growth targets, dataset assembly and expanding windows
"""
import numpy as np
import pytest

from config import SPECS, DatasetConfig
from forecasting.dataset import assemble, expanding_windows, growth_rates
from models import IndustryRoster, PairTotals, Quarter
from network.features import extract_all, extract_features
from network.graph import QuarterlyGraph, build_graphs, two_hop
from processors.payment_processor import aggregate_quarterly, fill_quarters
from synthetic.generator import synth_generate, synth_roster
from utils.errors import ConfigError, DataError

Q1, Q2, Q3 = Quarter(2017, 1), Quarter(2017, 2), Quarter(2017, 3)


@pytest.fixture
def sample(small_synth):
    roster = synth_roster(small_synth.sectors)
    totals = fill_quarters(aggregate_quarterly(synth_generate(small_synth, 21, roster), roster))
    graphs = build_graphs(totals, roster)
    return totals, graphs, extract_all(graphs)


@pytest.fixture
def dataset(sample):
    totals, graphs, features = sample
    return assemble(SPECS, graphs, features, growth_rates(totals))


def test_growth_example():
    (obs,) = growth_rates([PairTotals(Q1, {(0, 1): 10000}), PairTotals(Q2, {(0, 1): 11000})])
    assert (obs.source, obs.dest, obs.quarter) == (0, 1, Q2)
    assert obs.growth == pytest.approx(0.10)
    assert not obs.clipped


def test_pair_absent_in_either_quarter_has_no_growth():
    totals = [PairTotals(Q1, {(0, 1): 100, (1, 0): 100}), PairTotals(Q2, {(0, 1): 300, (0, 2): 100})]
    assert [(g.source, g.dest) for g in growth_rates(totals)] == [(0, 1)]


def test_growth_needs_contiguous_quarters():
    with pytest.raises(DataError):
        growth_rates([PairTotals(Q1, {(0, 1): 100}), PairTotals(Q3, {(0, 1): 100})])


def test_growth_winsorization():
    totals = [PairTotals(Q1, {(0, 1): 100}), PairTotals(Q2, {(0, 1): 1000})]
    (clipped,) = growth_rates(totals)
    assert clipped.growth == 5.0 and clipped.clipped
    (raw,) = growth_rates(totals, clip=None)
    assert raw.growth == 9.0 and not raw.clipped


def test_blocks_are_disjoint_and_combined_is_their_union(dataset):
    traditional = dataset.columns('traditional')
    network = dataset.columns('network')
    assert not set(traditional) & set(network)
    assert dataset.columns('combined') == traditional + network
    assert {'lag1', 'lag2', 'q1', 'source_idx'} <= set(traditional)
    assert {'src_betweenness', 'dst_eigenvector', 'two_hop', 'density'} <= set(network)
    with pytest.raises(ConfigError):
        dataset.columns('everything')


def test_every_spec_sees_the_same_rows(dataset):
    shapes = {spec: dataset.matrix(spec)[0].shape for spec in SPECS}
    assert {rows for rows, _ in shapes.values()} == {len(dataset)}
    assert shapes['combined'][1] == shapes['traditional'][1] + shapes['network'][1]
    _, categorical = dataset.matrix('traditional')
    assert categorical.sum() == 2


def test_first_quarters_have_no_rows(dataset):
    assert dataset.quarters[0] == Quarter(2017, 4)
    assert dataset.dropped > 0


def test_optional_lag2_keeps_earlier_rows(sample):
    totals, graphs, features = sample
    data = assemble(SPECS, graphs, features, growth_rates(totals), DatasetConfig(require_lag2=False))
    assert data.quarters[0] == Q3
    first = data.rows_in([Q3])
    assert (data.features.loc[first, 'lag2_missing'] == 1.0).all()
    assert (data.features.loc[first, 'lag2'] == 0.0).all()


def test_onehot_fixed_effects(sample):
    totals, graphs, features = sample
    data = assemble(SPECS, graphs, features, growth_rates(totals), DatasetConfig(fixed_effects='onehot'))
    assert data.categorical == []
    assert 'src_is_S001' in data.columns('traditional')
    one_hot = data.features[[f"src_is_{c}" for c in data.roster.codes]].to_numpy()
    np.testing.assert_array_equal(one_hot.sum(axis=1), np.ones(len(data)))


def test_row_values_come_from_the_previous_quarter(sample, dataset):
    totals, graphs, features = sample
    row = len(dataset) // 2
    i, j, ordinal = (int(v) for v in dataset.keys.iloc[row][['source', 'dest', 'qidx']])
    previous = next(k for k, g in enumerate(graphs) if g.quarter.ordinal == ordinal - 1)
    values = dataset.features.iloc[row]
    table = features[previous]
    assert values['src_in_degree'] == table.nodes.in_degree[i]
    assert values['dst_eigenvector'] == table.nodes.eigenvector[j]
    assert values['two_hop'] == two_hop(graphs[previous])[i, j]
    assert values['density'] == table.globals.density
    growth = {(g.source, g.dest, g.quarter.ordinal): g.growth for g in growth_rates(totals)}
    assert dataset.target[row] == growth[(i, j, ordinal)]
    assert values['lag1'] == growth[(i, j, ordinal - 1)]
    assert values['lag2'] == growth[(i, j, ordinal - 2)]


def test_future_graphs_do_not_leak_into_earlier_rows(sample, dataset):
    totals, graphs, features = sample
    network = dataset.columns('network')
    for k in range(3, len(graphs) - 1, 4):
        adj = np.array(graphs[k].adj)
        adj[0, 1] = adj[0, 1] * 3 + 1e6
        adj[2, :] = 0.0
        perturbed = QuarterlyGraph(graphs[k].quarter, adj, graphs[k].roster)
        graphs2 = graphs[:k] + [perturbed] + graphs[k + 1:]
        features2 = features[:k] + [extract_features(perturbed)] + features[k + 1:]
        data2 = assemble(SPECS, graphs2, features2, growth_rates(totals))

        cutoff = graphs[k].quarter.ordinal
        early = dataset.ordinals <= cutoff
        np.testing.assert_array_equal(data2.features[early].to_numpy(), dataset.features[early].to_numpy())
        later = dataset.ordinals == cutoff + 1
        assert not np.array_equal(data2.features.loc[later, network].to_numpy(),
                                  dataset.features.loc[later, network].to_numpy())


def test_undefined_path_length_is_filled_with_zero():
    roster = IndustryRoster.from_codes(['A', 'B', 'C'])
    totals = [PairTotals(Quarter(2017, q), {(0, 1): 100 * q}) for q in (1, 2, 3, 4)]
    graphs = build_graphs(totals, roster)
    empty = QuarterlyGraph(graphs[2].quarter, np.zeros((3, 3)), roster)
    graphs[2] = empty
    features = extract_all(graphs)
    data = assemble(SPECS, graphs, features, growth_rates(totals))
    assert [q.label for q in data.quarters] == ['2017Q4']
    assert data.features['avg_path_length'].tolist() == [0.0]
    assert data.features['density'].tolist() == [0.0]


def test_unknown_specification_is_rejected(sample):
    totals, graphs, features = sample
    with pytest.raises(ConfigError):
        assemble(['traditional', 'fancy'], graphs, features, growth_rates(totals))


def test_schema_lists_blocks_and_hashes(dataset):
    schema = dataset.schema('abc')
    assert schema['rows'] == len(dataset)
    assert schema['specs']['combined'] == dataset.columns('combined')
    assert schema['columns'][:4] == ['source', 'dest', 'quarter', 'target']
    assert dataset.schema_hash('traditional') != dataset.schema_hash('combined')
    assert dataset.dataset_hash() == dataset.dataset_hash()


def test_expanding_windows_example():
    splits = expanding_windows(5, 2)
    assert [(s.train, s.test) for s in splits] == [((0, 1), 2), ((0, 1, 2), 3), ((0, 1, 2, 3), 4)]
    assert [s.index for s in splits] == [0, 1, 2]


def test_expanding_windows_train_strictly_precedes_test():
    for split in expanding_windows(20, 6):
        assert max(split.train) < split.test
        assert split.train == tuple(range(split.test))


def test_expanding_window_errors():
    with pytest.raises(ConfigError):
        expanding_windows(10, 1)
    with pytest.raises(DataError):
        expanding_windows(3, 3)
