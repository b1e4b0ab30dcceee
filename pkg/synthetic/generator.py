import logging
from typing import List, Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit
from scipy.stats import norm

from config import SynthConfig
from models import IndustryRoster, PaymentRecord, Quarter, quarter_range
from network.features import clustering_from_mask

logger = logging.getLogger(__name__)

# Within-quarter seasonal pattern of log flows, Q1..Q4
SEASONAL_PROFILE = np.array([1.0, -0.5, 0.5, -1.0])
MONTH_CONCENTRATION = 20.0
_HERMITE_POINTS = 40


def synth_roster(n: int, base: Optional[IndustryRoster] = None) -> IndustryRoster:
    """First n industries of the base roster, or S001.. codes when it is too short"""
    if base is not None and n <= base.n:
        return IndustryRoster(
            base.codes[:n],
            base.names[:n] if base.names else (),
            base.categories[:n] if base.categories else (),
        )
    return IndustryRoster.from_codes([f"S{i + 1:03d}" for i in range(n)])


def _standard_sizes(n: int, seed: int) -> np.ndarray:
    """Normal quantiles at (rank - 0.5)/n with ranks randomly assigned to sectors"""
    rng = np.random.default_rng([seed, 0])
    ranks = rng.permutation(n) + 1
    return norm.ppf((ranks - 0.5) / n)


def sector_sizes(config: SynthConfig, seed: int) -> np.ndarray:
    """Planted log-normal sector sizes; larger sectors send and receive larger flows"""
    return np.exp(config.size_sigma * _standard_sizes(config.sectors, seed))


def _presence_intercept(base: np.ndarray, spread: float, density: float) -> float:
    """
    Intercept alpha with mean(E[sigmoid(alpha + base + spread * Z)]) = density

    The expectation over the standard normal Z uses Gauss-Hermite quadrature.
    """
    nodes, weights = np.polynomial.hermite_e.hermegauss(_HERMITE_POINTS)
    weights = weights / weights.sum()

    def excess(alpha: float) -> float:
        probs = expit(alpha + base[:, None] + spread * nodes[None, :]) @ weights
        return float(probs.mean()) - density

    return brentq(excess, -60.0, 60.0, xtol=1e-12)


def _standardize(values: np.ndarray) -> np.ndarray:
    sd = values.std()
    if sd == 0.0:
        return np.zeros_like(values, dtype=np.float64)
    return (values - values.mean()) / sd


def structural_score(mask: np.ndarray, clustering_weight: float) -> np.ndarray:
    """Per-sector mix of standardized total degree and clustering on one graph"""
    degree = (mask.sum(axis=0) + mask.sum(axis=1)).astype(np.float64)
    clustering = clustering_from_mask(mask)
    return (1.0 - clustering_weight) * _standardize(degree) + clustering_weight * _standardize(clustering)


def synth_generate(config: SynthConfig, seed: int,
                   roster: Optional[IndustryRoster] = None) -> List[PaymentRecord]:
    """
    Generate monthly payment records with a planted network signal

    Each quarter a pair is present with probability
    sigmoid(alpha + activity * (h_i + h_j) + size_presence * (s_i + s_j)), where
    h is fresh sector activity noise and s the standardized sector size; alpha
    is calibrated to the target density. Log flows revert to a gravity mean
    log(scale) + size_sigma * (s_i + s_j) and are pushed by a growth term

        y(t) = rho(t) * y(t-1) + noise * e + signal * (z_i + z_j) + shocks

    with z the structural score of the previous quarter's graph. Inside the shock
    window rho drops to `shock_persistence`, the signal is scaled by
    `shock_signal` and sector level shocks are added. Quarterly flows are
    split into three months.

    Args:
        config: Validated generator settings
        seed: Random seed; the output is a pure function of (config, seed)
        roster: Codes to label sectors with; defaults to S001..

    Returns:
        Records ordered by month, then source and destination roster index
    """
    config.validate()
    n = config.sectors
    roster = roster if roster is not None and roster.n == n else synth_roster(n, roster)

    size = _standard_sizes(n, seed)
    off = ~np.eye(n, dtype=bool)
    pair_size = size[:, None] + size[None, :]
    mean_level = np.log(config.scale) + config.size_sigma * pair_size

    spread = config.activity * np.sqrt(2.0)
    if config.density >= 1.0:
        alpha = np.inf
    else:
        alpha = _presence_intercept(config.size_presence * pair_size[off], spread, config.density)

    rng = np.random.default_rng([seed, 1])
    quarters = quarter_range(config.first_quarter, config.last_quarter)
    first = quarters[0].ordinal
    shock = config.shock_window
    level = mean_level.copy()
    growth = np.zeros((n, n))
    previous_mask: Optional[np.ndarray] = None
    records: List[PaymentRecord] = []
    densities = []

    for ordinal in range(first - config.burn_in, quarters[-1].ordinal + 1):
        quarter = Quarter.from_ordinal(ordinal)
        in_shock = shock is not None and shock[0] <= quarter <= shock[1]

        activity = rng.standard_normal(n)
        if np.isinf(alpha):
            mask = off.copy()
        else:
            logits = alpha + config.activity * (activity[:, None] + activity[None, :]) \
                + config.size_presence * pair_size
            mask = (rng.random((n, n)) < expit(logits)) & off

        rho = config.shock_persistence if in_shock else config.persistence
        growth = rho * growth + config.noise * rng.standard_normal((n, n))
        signal = config.signal * (config.shock_signal if in_shock else 1.0)
        if previous_mask is not None and signal:
            # last quarter's structure drives this quarter's growth
            score = structural_score(previous_mask, config.clustering_weight)
            growth += signal * (score[:, None] + score[None, :])
        if in_shock and config.level_shock:
            hit = rng.standard_normal(n)
            growth += config.level_shock * (hit[:, None] + hit[None, :])

        level = mean_level + config.level_reversion * (level - mean_level) + growth
        flows = np.exp(level + config.seasonal * SEASONAL_PROFILE[quarter.q - 1])
        shares = rng.gamma(MONTH_CONCENTRATION, size=(n, n, 3))
        shares /= shares.sum(axis=2, keepdims=True)
        previous_mask = mask

        if ordinal < first:
            continue
        densities.append(mask.sum() / (n * (n - 1)))
        pence = np.maximum(np.rint(flows[:, :, None] * shares * 100.0), 1).astype(np.int64)
        rows, cols = np.nonzero(mask)
        for m, month in enumerate(quarter.months):
            column = pence[rows, cols, m]
            records.extend(
                PaymentRecord(month, roster.codes[i], roster.codes[j], int(p))
                for i, j, p in zip(rows.tolist(), cols.tolist(), column.tolist())
            )

    logger.info(f"Generated {len(records)} records for {n} sectors over {len(quarters)} quarters "
                f"(mean density {np.mean(densities):.3f})")
    return records

