from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from utils.errors import DataError


@dataclass(frozen=True)
class MetricSet:
    """Forecast accuracy; rmse and mae in percentage points of growth, r2 None when undefined"""
    r2: Optional[float]
    rmse: Optional[float]
    mae: Optional[float]
    n: int

    @classmethod
    def empty(cls) -> 'MetricSet':
        return cls(None, None, None, 0)


def evaluate_metrics(predictions: Sequence[float], targets: Sequence[float]) -> MetricSet:
    """
    R2, RMSE and MAE of predictions against targets

    Args:
        predictions: Forecast growth rates
        targets: Realized growth rates, same length (at least 2)

    Returns:
        MetricSet; r2 is None when the targets have zero variance
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if predictions.shape != targets.shape:
        raise DataError(f"{predictions.size} predictions for {targets.size} targets")
    if targets.size < 2:
        raise DataError(f"metrics need at least 2 observations, got {targets.size}")
    errors = targets - predictions
    ss_res = float(np.sum(errors ** 2))
    ss_tot = float(np.sum((targets - targets.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else None
    rmse = float(np.sqrt(ss_res / targets.size)) * 100.0
    mae = float(np.mean(np.abs(errors))) * 100.0
    return MetricSet(r2, rmse, mae, int(targets.size))
