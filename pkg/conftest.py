"""
Shared fixtures for the test suite
"""
import numpy as np
import pytest

from config import RunConfig, SynthConfig
from models import IndustryRoster, Quarter
from network.graph import QuarterlyGraph


@pytest.fixture
def roster():
    return IndustryRoster(('A', 'B', 'C', 'D'), ('Alpha', 'Beta', 'Gamma', 'Delta'),
                          ('Manufacturing', 'Financial & Business', 'Other Services', 'Primary Industries'))


@pytest.fixture
def make_graph():
    """Factory building a QuarterlyGraph from a dense matrix"""
    def build(adj, quarter=Quarter(2017, 1), roster=None):
        adj = np.asarray(adj, dtype=float)
        if roster is None:
            roster = IndustryRoster.from_codes([f"N{i}" for i in range(adj.shape[0])])
        return QuarterlyGraph(quarter, adj, roster)
    return build


@pytest.fixture
def random_digraph():
    """Factory for random weighted digraphs: (rng, n, p) -> adjacency with zero diagonal"""
    def build(rng, n, p=0.4, low=1.0, high=100.0):
        mask = rng.random((n, n)) < p
        np.fill_diagonal(mask, False)
        return np.where(mask, rng.uniform(low, high, size=(n, n)), 0.0)
    return build


@pytest.fixture
def small_synth():
    """A small generator setting that keeps experiments fast"""
    return SynthConfig(sectors=12, start='2017Q1', end='2021Q4', shock_start='2020Q1', shock_end='2020Q4')


@pytest.fixture
def small_run_config(tmp_path, small_synth):
    """Run configuration over a 12-sector synthetic sample, inferred roster, small ensembles"""
    config = RunConfig(seed=3, jobs=1)
    config.paths.output_dir = str(tmp_path / 'out')
    config.paths.input = str(tmp_path / 'out' / 'payments.csv')
    config.paths.roster = str(tmp_path / 'missing_roster.csv')
    config.ingestion.roster_policy = 'infer'
    config.ingestion.sample_end = '2021Q4'
    config.synth = small_synth
    config.model.forest.n_trees = 10
    config.model.forest.min_leaf = 5
    config.model.boosted.n_rounds = 20
    config.model.boosted.min_leaf = 5
    config.windows.min_train = 6
    config.windows.min_test_rows = 10
    config.evaluation.periods = {'Before': [2017, 2019], 'Shock': [2020, 2020], 'After': [2021, 2021]}
    config.evaluation.top_n = 5
    return config.validate()
