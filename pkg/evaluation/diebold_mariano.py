import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import statsmodels.api as sm
from scipy.stats import norm

from utils.errors import DataError, DegenerateInputError

logger = logging.getLogger(__name__)

MIN_DM_LENGTH = 8


@dataclass(frozen=True)
class DMResult:
    """
    Diebold-Mariano comparison of two paired forecast-error series.

    A positive statistic means model 1 has the larger squared errors.
    `indistinguishable` marks identical losses, where the statistic is undefined.
    """
    statistic: Optional[float]
    p_value: Optional[float]
    mean_difference: float
    n: int
    indistinguishable: bool = False
    hac_lag: Optional[int] = None


def loss_differential(errors_model1: Sequence[float], errors_model2: Sequence[float]) -> np.ndarray:
    """d_t = e1_t^2 - e2_t^2 for paired errors"""
    e1 = np.asarray(errors_model1, dtype=np.float64)
    e2 = np.asarray(errors_model2, dtype=np.float64)
    if e1.shape != e2.shape or e1.ndim != 1:
        raise DataError(f"error series are not paired: {e1.shape} vs {e2.shape}")
    if not (np.all(np.isfinite(e1)) and np.all(np.isfinite(e2))):
        raise DataError("forecast errors must be finite")
    return e1 ** 2 - e2 ** 2


def dm_from_differential(d: Sequence[float], hac_lag: Optional[int] = None) -> DMResult:
    """
    DM statistic d_bar / sqrt(Var(d_bar)) for a loss-differential series

    Args:
        d: Loss differentials, at least 2
        hac_lag: None for Var(d_bar) = var(d, ddof=1) / T; otherwise a
            Bartlett-kernel Newey-West variance with this many lags

    Returns:
        DMResult with a two-sided normal p-value
    """
    d = np.asarray(d, dtype=np.float64)
    T = d.size
    if T < 2:
        raise DataError(f"loss differential needs at least 2 observations, got {T}")
    mean = float(d.mean())
    if np.all(d == d[0]):
        if mean == 0.0:
            return DMResult(None, None, 0.0, T, indistinguishable=True, hac_lag=hac_lag)
        raise DegenerateInputError(f"loss differential is constant at {mean}; DM statistic undefined")

    if hac_lag is None:
        variance = float(d.var(ddof=1)) / T
    else:
        fit = sm.OLS(d, np.ones(T)).fit(cov_type='HAC', cov_kwds={'maxlags': hac_lag, 'use_correction': False})
        variance = float(fit.bse[0]) ** 2
    if variance <= 0.0:
        raise DegenerateInputError("estimated variance of the mean loss differential is not positive")
    statistic = mean / np.sqrt(variance)
    p_value = float(2.0 * norm.sf(abs(statistic)))
    return DMResult(float(statistic), p_value, mean, T, hac_lag=hac_lag)


def diebold_mariano(errors_model1: Sequence[float], errors_model2: Sequence[float],
                    hac_lag: Optional[int] = None) -> DMResult:
    """
    Diebold-Mariano test on squared-error loss

    Args:
        errors_model1: Forecast errors of model 1
        errors_model2: Forecast errors of model 2, paired with model 1's by key
        hac_lag: Optional Newey-West lag for the variance

    Returns:
        DMResult; swapping the models flips the statistic's sign
    """
    d = loss_differential(errors_model1, errors_model2)
    if d.size < MIN_DM_LENGTH:
        raise DataError(f"Diebold-Mariano test needs at least {MIN_DM_LENGTH} paired errors, got {d.size}")
    result = dm_from_differential(d, hac_lag)
    if result.indistinguishable:
        logger.info("Forecast losses are identical; models are indistinguishable")
    return result
