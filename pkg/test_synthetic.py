"""
Tests for the synthetic payment generator
"""
import numpy as np
import pytest
from scipy.stats import spearmanr

from config import SynthConfig
from forecasting.dataset import growth_rates
from models import IndustryRoster, Quarter, quarter_range
from network.features import network_density
from network.graph import build_graphs
from processors.payment_processor import aggregate_quarterly, fill_quarters
from synthetic.generator import sector_sizes, structural_score, synth_generate, synth_roster
from utils.errors import ConfigError


def _graphs(records, roster):
    return build_graphs(fill_quarters(aggregate_quarterly(records, roster)), roster)


def test_same_seed_same_records(small_synth):
    assert synth_generate(small_synth, 11) == synth_generate(small_synth, 11)


def test_different_seeds_differ(small_synth):
    runs = [synth_generate(small_synth, seed) for seed in (1, 2, 3)]
    assert runs[0] != runs[1] and runs[1] != runs[2] and runs[0] != runs[2]


def test_full_density_without_noise_has_every_pair():
    config = SynthConfig(sectors=5, start='2017Q1', end='2017Q4', density=1.0, noise=0.0)
    roster = synth_roster(5)
    records = synth_generate(config, 1, roster)
    assert len(records) == 5 * 4 * 3 * 4
    for graph in _graphs(records, roster):
        assert graph.edge_count == 20
        assert network_density(graph) == 1.0


def test_one_sector_is_a_config_error():
    with pytest.raises(ConfigError):
        synth_generate(SynthConfig(sectors=1), 1)


def test_records_cover_the_configured_quarters(small_synth):
    records = synth_generate(small_synth, 4)
    quarters = sorted({r.quarter for r in records})
    assert quarters == quarter_range(Quarter(2017, 1), Quarter(2021, 4))
    assert all(r.pence >= 1 and r.source != r.dest for r in records)


def test_roster_labels():
    base = IndustryRoster(('01', '02', '03'), ('x', 'y', 'z'), ('Manufacturing',) * 3)
    assert synth_roster(2, base).codes == ('01', '02')
    assert synth_roster(2, base).names == ('x', 'y')
    assert synth_roster(4, base).codes == ('S001', 'S002', 'S003', 'S004')


def test_structural_score_is_standardized():
    rng = np.random.default_rng(0)
    mask = rng.random((10, 10)) < 0.5
    np.fill_diagonal(mask, False)
    score = structural_score(mask, 0.25)
    assert score.shape == (10,)
    assert abs(score.mean()) < 1e-12


def test_strength_follows_planted_sizes():
    config = SynthConfig(sectors=20, start='2017Q1', end='2018Q4', noise=0.02, signal=0.02)
    roster = synth_roster(20)
    graphs = _graphs(synth_generate(config, 9, roster), roster)
    adj = np.sum([g.adj for g in graphs], axis=0)
    strength = adj.sum(axis=0) + adj.sum(axis=1)
    sizes = sector_sizes(config, 9)
    assert spearmanr(strength, sizes).correlation > 0.8
    assert set(np.argsort(-strength)[:5]) == set(np.argsort(-sizes)[:5])


def test_shock_window_breaks_growth_persistence():
    config = SynthConfig(sectors=20, start='2017Q1', end='2022Q4', shock_start='2019Q3', shock_end='2021Q2',
                         shock_signal=1.0)
    roster = synth_roster(20)
    totals = fill_quarters(aggregate_quarterly(synth_generate(config, 5, roster), roster))
    growth = {(g.source, g.dest, g.quarter.ordinal): g.growth for g in growth_rates(totals, clip=None)}
    start, end = config.shock_window

    def autocorrelation(inside: bool) -> float:
        pairs = []
        for (i, j, o), g in growth.items():
            previous = growth.get((i, j, o - 1))
            if previous is None:
                continue
            shocked = start.ordinal <= o - 1 and o <= end.ordinal
            calm = o < start.ordinal or o - 1 > end.ordinal
            if (inside and shocked) or (not inside and calm):
                pairs.append((previous, g))
        a = np.array(pairs)
        return float(np.corrcoef(a[:, 0], a[:, 1])[0, 1])

    assert autocorrelation(inside=True) < autocorrelation(inside=False)


def test_shock_window_strengthens_the_network_signal():
    config = SynthConfig(sectors=25, start='2017Q1', end='2022Q4', shock_start='2019Q3', shock_end='2021Q2',
                         noise=0.01, persistence=0.0, level_shock=0.0, level_reversion=0.0, seasonal=0.0)
    roster = synth_roster(25)
    totals = fill_quarters(aggregate_quarterly(synth_generate(config, 4, roster), roster))
    graphs = {g.quarter.ordinal: g for g in build_graphs(totals, roster)}
    start, end = config.shock_window
    scores = {o: structural_score(g.edge_mask, config.clustering_weight) for o, g in graphs.items()}

    def slope(inside: bool) -> float:
        x, y = [], []
        for g in growth_rates(totals, clip=None):
            o = g.quarter.ordinal
            shocked = start.ordinal <= o - 1 and o <= end.ordinal
            calm = o < start.ordinal or o - 1 > end.ordinal
            if o - 1 in scores and ((inside and shocked) or (not inside and calm)):
                score = scores[o - 1]
                x.append(score[g.source] + score[g.dest])
                y.append(g.growth)
        return float(np.polyfit(x, y, 1)[0])

    assert slope(inside=True) > 1.8 * slope(inside=False) > 0


@pytest.mark.slow
def test_default_density_near_target():
    config = SynthConfig()
    roster = synth_roster(config.sectors)
    graphs = _graphs(synth_generate(config, 7, roster), roster)
    assert len(graphs) == 32
    assert abs(np.mean([network_density(g) for g in graphs]) - 0.70) <= 0.05
