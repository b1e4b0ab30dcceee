import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config import NODE_FEATURE_NAMES, SPECS, DatasetConfig
from models import IndustryRoster, PairTotals, Quarter
from network.features import FeatureTable
from network.graph import QuarterlyGraph, two_hop
from utils.errors import ConfigError, DataError
from utils.file_utils import stable_hash

logger = logging.getLogger(__name__)

KEY_COLUMNS = ('source', 'dest', 'quarter')


@dataclass(frozen=True)
class GrowthObservation:
    """Quarter-on-quarter growth of one pair's flow; `clipped` marks winsorized values"""
    source: int
    dest: int
    quarter: Quarter
    growth: float
    clipped: bool = False


@dataclass(frozen=True)
class WindowSplit:
    """Train on dataset quarters [0, test) and test on quarter position `test`"""
    index: int
    train: Tuple[int, ...]
    test: int


def growth_rates(totals: Sequence[PairTotals], clip: Optional[float] = 5.0) -> List[GrowthObservation]:
    """
    Growth (w_t - w_{t-1}) / w_{t-1} for every pair positive in both quarters

    Args:
        totals: Contiguous, ordered quarterly totals
        clip: Winsorize growth to [-clip, clip]; None disables

    Returns:
        Observations ordered by quarter, source, dest
    """
    for prev, cur in zip(totals, totals[1:]):
        if cur.quarter != prev.quarter.next():
            raise DataError(f"quarters are not contiguous: {prev.quarter} is followed by {cur.quarter}")

    observations: List[GrowthObservation] = []
    clipped = 0
    for prev, cur in zip(totals, totals[1:]):
        for (i, j), pence in cur.items():
            before = prev.totals.get((i, j))
            if not before:
                continue
            growth = (pence - before) / before
            hit = clip is not None and abs(growth) > clip
            if hit:
                growth = float(np.clip(growth, -clip, clip))
                clipped += 1
            observations.append(GrowthObservation(i, j, cur.quarter, growth, hit))
    if clipped:
        logger.info(f"Winsorized {clipped} of {len(observations)} growth rates at +/-{clip}")
    return observations


def _growth_matrices(growth: Iterable[GrowthObservation], n: int) -> Dict[int, np.ndarray]:
    matrices: Dict[int, np.ndarray] = {}
    for obs in growth:
        matrix = matrices.get(obs.quarter.ordinal)
        if matrix is None:
            matrix = matrices[obs.quarter.ordinal] = np.full((n, n), np.nan)
        matrix[obs.source, obs.dest] = obs.growth
    return matrices


@dataclass
class ForecastDataset:
    """
    Supervised rows keyed by (source, dest, quarter), with a traditional and a
    network column block. Every specification sees the same rows and target.
    """
    keys: pd.DataFrame
    target: np.ndarray
    features: pd.DataFrame
    blocks: Dict[str, List[str]]
    categorical: List[str]
    roster: IndustryRoster
    dropped: int = 0
    metadata: Dict[str, object] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.target)

    def columns(self, spec: str) -> List[str]:
        if spec == 'traditional':
            return list(self.blocks['traditional'])
        if spec == 'network':
            return list(self.blocks['network'])
        if spec == 'combined':
            return self.blocks['traditional'] + self.blocks['network']
        raise ConfigError(f"unknown specification: {spec}")

    def matrix(self, spec: str, rows: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Feature matrix for a specification and a boolean mask of categorical columns"""
        cols = self.columns(spec)
        X = self.features[cols].to_numpy(dtype=np.float64)
        if rows is not None:
            X = X[rows]
        return X, np.array([c in self.categorical for c in cols], dtype=bool)

    @property
    def ordinals(self) -> np.ndarray:
        return self.keys['qidx'].to_numpy()

    @property
    def quarters(self) -> List[Quarter]:
        """Target quarters that have at least one row, in order"""
        return [Quarter.from_ordinal(int(o)) for o in np.unique(self.ordinals)]

    def rows_in(self, quarters: Iterable[Quarter]) -> np.ndarray:
        wanted = [q.ordinal for q in quarters]
        return np.isin(self.ordinals, wanted)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            'source': [self.roster.codes[i] for i in self.keys['source']],
            'dest': [self.roster.codes[j] for j in self.keys['dest']],
            'quarter': [Quarter.from_ordinal(int(o)).label for o in self.keys['qidx']],
            'target': self.target,
        })
        return pd.concat([frame, self.features.reset_index(drop=True)], axis=1)

    def dataset_hash(self) -> str:
        hashed = pd.util.hash_pandas_object(self.to_frame(), index=False).to_numpy()
        return hashlib.sha256(hashed.tobytes()).hexdigest()[:16]

    def schema_hash(self, spec: str) -> str:
        """Identifies the column layout a model for `spec` was fitted on"""
        cols = self.columns(spec)
        return stable_hash({'columns': cols, 'categorical': [c for c in cols if c in self.categorical]})

    def schema(self, config_hash: str) -> Dict[str, object]:
        return {
            'columns': list(self.to_frame().columns),
            'keys': list(KEY_COLUMNS),
            'target': 'target',
            'blocks': {name: list(cols) for name, cols in self.blocks.items()},
            'specs': {spec: self.columns(spec) for spec in SPECS},
            'categorical': list(self.categorical),
            'rows': len(self),
            'dropped_rows': self.dropped,
            'config_hash': config_hash,
            'dataset_hash': self.dataset_hash(),
            **self.metadata,
        }


def assemble(specs: Sequence[str],
             graphs: Sequence[QuarterlyGraph],
             features: Sequence[FeatureTable],
             growth: Sequence[GrowthObservation],
             options: Optional[DatasetConfig] = None,
             two_hop_normalized: bool = True) -> ForecastDataset:
    """
    Join lagged growth, seasonal dummies, fixed effects and previous-quarter
    network features into one row per (pair, target quarter)

    A row for target quarter t needs growth at t-1 (and t-2 unless
    `require_lag2` is off). Every network value is read from graph t-1.

    Args:
        specs: Specifications the dataset must serve
        graphs: Quarterly graphs, one per quarter of the contiguous sample
        features: Feature tables aligned with `graphs`
        growth: Growth observations over the same sample
        options: Clip, lag, fixed-effect and feature-pruning settings
        two_hop_normalized: Read the two-hop term from the row-normalized matrix

    Returns:
        ForecastDataset with rows sorted by (quarter, source, dest)
    """
    options = options or DatasetConfig()
    unknown = [s for s in specs if s not in SPECS]
    if unknown:
        raise ConfigError(f"unknown specifications: {unknown}")
    if len(graphs) != len(features):
        raise DataError("graphs and feature tables are not aligned")
    if not graphs:
        raise DataError("no quarterly graphs to build a dataset from")
    roster = graphs[0].roster or IndustryRoster.from_codes([str(i) for i in range(graphs[0].n)])
    n = roster.n

    by_ordinal = {g.quarter.ordinal: (g, f) for g, f in zip(graphs, features)}
    matrices = _growth_matrices(growth, n)
    node_names = [name for name in NODE_FEATURE_NAMES if name in options.network_features]

    # Column blocks
    traditional = ['lag1', 'lag2'] + ([] if options.require_lag2 else ['lag2_missing'])
    traditional += ['q1', 'q2', 'q3', 'q4']
    if options.fixed_effects == 'index':
        traditional += ['source_idx', 'dest_idx']
        categorical = ['source_idx', 'dest_idx']
    else:
        traditional += [f"src_is_{c}" for c in roster.codes] + [f"dst_is_{c}" for c in roster.codes]
        categorical = []
    network = [f"src_{name}" for name in node_names] + [f"dst_{name}" for name in node_names]
    network += ['two_hop', 'density', 'avg_path_length']

    key_parts: List[Dict[str, np.ndarray]] = []
    parts: List[Dict[str, np.ndarray]] = []
    targets: List[np.ndarray] = []
    dropped = 0
    missing_path = 0
    for ordinal in sorted(matrices):
        current = matrices[ordinal]
        observed = ~np.isnan(current)
        lag1 = matrices.get(ordinal - 1)
        lag2 = matrices.get(ordinal - 2)
        previous = by_ordinal.get(ordinal - 1)
        if lag1 is None or previous is None:
            dropped += int(observed.sum())
            continue
        # Pairs observed now and at the lags the options require
        valid = observed & ~np.isnan(lag1)
        if options.require_lag2:
            valid &= ~np.isnan(lag2) if lag2 is not None else np.zeros_like(valid)
        dropped += int(observed.sum() - valid.sum())
        rows, cols = np.nonzero(valid)
        if rows.size == 0:
            continue

        graph, table = previous
        quarter = Quarter.from_ordinal(ordinal)
        # Traditional block
        lag2_values = lag2[rows, cols] if lag2 is not None else np.full(rows.size, np.nan)
        part: Dict[str, np.ndarray] = {
            'lag1': lag1[rows, cols],
            'lag2': np.nan_to_num(lag2_values, nan=0.0),
        }
        if not options.require_lag2:
            part['lag2_missing'] = np.isnan(lag2_values).astype(np.float64)
        for q in range(1, 5):
            part[f"q{q}"] = np.full(rows.size, 1.0 if quarter.q == q else 0.0)
        if options.fixed_effects == 'index':
            part['source_idx'] = rows.astype(np.float64)
            part['dest_idx'] = cols.astype(np.float64)
        else:
            for k, code in enumerate(roster.codes):
                part[f"src_is_{code}"] = (rows == k).astype(np.float64)
            for k, code in enumerate(roster.codes):
                part[f"dst_is_{code}"] = (cols == k).astype(np.float64)

        # Network block, all from the previous quarter's graph
        node_values = table.nodes.model_features()
        for name in node_names:
            part[f"src_{name}"] = node_values[name][rows]
        for name in node_names:
            part[f"dst_{name}"] = node_values[name][cols]
        part['two_hop'] = two_hop(graph, normalized=two_hop_normalized)[rows, cols]
        part['density'] = np.full(rows.size, table.globals.density)
        path_length = table.globals.avg_path_length
        if path_length is None:
            missing_path += 1
            path_length = 0.0
        part['avg_path_length'] = np.full(rows.size, path_length)

        parts.append(part)
        key_parts.append({'source': rows, 'dest': cols, 'qidx': np.full(rows.size, ordinal)})
        targets.append(current[rows, cols])

    if missing_path:
        logger.warning(f"Average path length undefined in {missing_path} quarters; filled with 0.0")
    if dropped:
        logger.info(f"Dropped {dropped} growth observations without enough lag history")

    columns = traditional + network
    if parts:
        features_frame = pd.DataFrame({c: np.concatenate([p[c] for p in parts]) for c in columns})
        keys = pd.DataFrame({k: np.concatenate([p[k] for p in key_parts]).astype(np.int64)
                             for k in ('source', 'dest', 'qidx')})
        target = np.concatenate(targets)
    else:
        features_frame = pd.DataFrame({c: np.array([], dtype=np.float64) for c in columns})
        keys = pd.DataFrame({k: np.array([], dtype=np.int64) for k in ('source', 'dest', 'qidx')})
        target = np.array([], dtype=np.float64)

    dataset = ForecastDataset(
        keys=keys,
        target=target,
        features=features_frame,
        blocks={'traditional': traditional, 'network': network},
        categorical=categorical,
        roster=roster,
        dropped=dropped,
        metadata={'clip': options.clip, 'require_lag2': options.require_lag2,
                  'clipped_growth': int(sum(1 for g in growth if g.clipped)),
                  'fixed_effects': options.fixed_effects},
    )
    logger.info(f"Assembled {len(dataset)} rows over {len(dataset.quarters)} target quarters "
                f"({len(traditional)} traditional + {len(network)} network columns)")
    return dataset


def expanding_windows(T: int, min_train: int) -> List[WindowSplit]:
    """
    Expanding-window splits over T ordered quarters

    Args:
        T: Number of quarters
        min_train: Quarters in the first training set

    Returns:
        Splits [0, t) -> t for t = min_train .. T-1
    """
    if min_train < 2:
        raise ConfigError(f"min_train must be at least 2, got {min_train}")
    if T <= min_train:
        raise DataError(f"{T} quarters leave no test quarter after {min_train} training quarters")
    return [WindowSplit(k, tuple(range(t)), t) for k, t in enumerate(range(min_train, T))]
