import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args, get_origin, get_type_hints

import yaml

from models import Quarter
from utils.errors import ConfigError, DataError
from utils.file_utils import stable_hash

# Application settings
LOG_LEVEL = os.environ.get('PAYNET_LOG_LEVEL', 'INFO').upper()
DEFAULT_JOBS = int(os.environ['PAYNET_JOBS']) if os.environ.get('PAYNET_JOBS') else None

# File settings
BASE_DIR = Path(__file__).resolve().parent
OUTPUT_DIR = os.environ.get('PAYNET_OUTPUT_DIR', 'output')
ROSTER_PATH = os.environ.get('PAYNET_ROSTER_PATH', str(BASE_DIR / 'data' / 'sic_roster.csv'))
DEFAULT_CONFIG_PATH = BASE_DIR / 'default.yaml'
ALLOWED_EXTENSIONS = {'csv'}
CSV_HEADER = ('date', 'source', 'dest', 'value')

# Per-node features that may enter the network block, for each endpoint
NODE_FEATURE_NAMES = (
    'in_degree', 'out_degree', 'log_in_strength', 'log_out_strength',
    'betweenness', 'eigenvector', 'clustering',
)

SPECS = ('traditional', 'network', 'combined')
ALGORITHMS = ('forest', 'boosted')


def resolve_jobs(jobs: Optional[int]) -> int:
    """Worker count: explicit value, else PAYNET_JOBS, else available cores"""
    if jobs is None:
        jobs = DEFAULT_JOBS
    if jobs is None:
        jobs = os.cpu_count() or 1
    return max(1, int(jobs))


def _parse_quarter(text: str, name: str) -> Quarter:
    try:
        return Quarter.parse(text)
    except DataError as e:
        raise ConfigError(f"{name}: {e}")


@dataclass
class PathsConfig:
    input: str = 'data/payments.csv'
    output_dir: str = OUTPUT_DIR
    roster: str = ROSTER_PATH


@dataclass
class IngestionConfig:
    roster_policy: str = 'fixed'
    keep_self_flows: bool = False
    sample_start: str = '2017Q1'
    sample_end: str = '2024Q4'

    def validate(self):
        if self.roster_policy not in ('fixed', 'infer'):
            raise ConfigError(f"ingestion.roster_policy must be 'fixed' or 'infer', got {self.roster_policy!r}")
        if self.start > self.end:
            raise ConfigError("ingestion.sample_start is after ingestion.sample_end")

    @property
    def start(self) -> Quarter:
        return _parse_quarter(self.sample_start, 'ingestion.sample_start')

    @property
    def end(self) -> Quarter:
        return _parse_quarter(self.sample_end, 'ingestion.sample_end')


@dataclass
class SynthConfig:
    """
    Synthetic payment generator settings.

    Sector sizes are log-normal quantiles (`size_sigma`); log-flows follow a
    mean-reverting level (`level_reversion`) driven by an AR(1) growth term
    whose coefficient is `persistence` outside the shock window and
    `shock_persistence` inside it. `signal` links next-quarter pair growth to
    the endpoints' centrality/clustering score on the previous quarter's graph.
    Inside the shock window the signal is scaled by `shock_signal`.
    """
    sectors: int = 89
    start: str = '2017Q1'
    end: str = '2024Q4'
    density: float = 0.70
    shock_start: Optional[str] = '2020Q1'
    shock_end: Optional[str] = '2021Q4'
    signal: float = 0.06
    noise: float = 0.08
    persistence: float = 0.6
    shock_persistence: float = 0.0
    level_shock: float = 0.03
    shock_signal: float = 2.5
    level_reversion: float = 0.9
    seasonal: float = 0.02
    size_sigma: float = 1.2
    size_presence: float = 0.3
    activity: float = 0.8
    clustering_weight: float = 0.25
    scale: float = 1.0e6
    burn_in: int = 8

    def validate(self):
        if self.sectors < 2:
            raise ConfigError(f"synth.sectors must be at least 2, got {self.sectors}")
        if self.first_quarter > self.last_quarter:
            raise ConfigError("synth quarter range is empty")
        if not 0.0 < self.density <= 1.0:
            raise ConfigError(f"synth.density must lie in (0, 1], got {self.density}")
        if (self.shock_start is None) != (self.shock_end is None):
            raise ConfigError("synth.shock_start and synth.shock_end must be set together")
        if self.shock_start is not None and self.shock_window[0] > self.shock_window[1]:
            raise ConfigError("synth shock window is empty")
        for name in ('noise', 'level_shock', 'shock_signal', 'size_sigma', 'scale', 'activity', 'seasonal'):
            if getattr(self, name) < 0:
                raise ConfigError(f"synth.{name} must be non-negative")
        for name in ('persistence', 'shock_persistence', 'level_reversion'):
            if not -1.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"synth.{name} must lie in (-1, 1)")
        if not 0.0 <= self.clustering_weight <= 1.0:
            raise ConfigError("synth.clustering_weight must lie in [0, 1]")
        if self.burn_in < 1:
            raise ConfigError("synth.burn_in must be at least 1")
        if self.scale <= 0:
            raise ConfigError("synth.scale must be positive")

    @property
    def first_quarter(self) -> Quarter:
        return _parse_quarter(self.start, 'synth.start')

    @property
    def last_quarter(self) -> Quarter:
        return _parse_quarter(self.end, 'synth.end')

    @property
    def shock_window(self) -> Optional[tuple]:
        if self.shock_start is None:
            return None
        return (_parse_quarter(self.shock_start, 'synth.shock_start'),
                _parse_quarter(self.shock_end, 'synth.shock_end'))


@dataclass
class FeatureConfig:
    weighted_betweenness: bool = False
    eigenvector_direction: str = 'left'
    two_hop_normalized: bool = True

    def validate(self):
        if self.eigenvector_direction not in ('left', 'right'):
            raise ConfigError("features.eigenvector_direction must be 'left' or 'right'")


@dataclass
class DatasetConfig:
    clip: Optional[float] = 5.0
    require_lag2: bool = True
    fixed_effects: str = 'index'
    network_features: List[str] = field(default_factory=lambda: list(NODE_FEATURE_NAMES))

    def validate(self):
        if self.clip is not None and self.clip <= 0:
            raise ConfigError("dataset.clip must be positive or null")
        if self.fixed_effects not in ('index', 'onehot'):
            raise ConfigError("dataset.fixed_effects must be 'index' or 'onehot'")
        unknown = set(self.network_features) - set(NODE_FEATURE_NAMES)
        if unknown:
            raise ConfigError(f"dataset.network_features has unknown names: {sorted(unknown)}")


@dataclass
class ForestParams:
    n_trees: int = 200
    max_depth: Optional[int] = 8
    min_leaf: int = 20
    feature_subsample: float = 1.0 / 3.0
    bootstrap: bool = True
    max_bins: int = 255

    def validate(self):
        if self.n_trees < 1:
            raise ConfigError("forest n_trees must be at least 1")
        _validate_tree_params(self, 'forest')


@dataclass
class BoostParams:
    n_rounds: int = 300
    learning_rate: float = 0.05
    max_depth: Optional[int] = 3
    min_leaf: int = 20
    feature_subsample: float = 1.0
    max_bins: int = 255
    patience: Optional[int] = None

    def validate(self):
        if self.n_rounds < 0:
            raise ConfigError("boosted n_rounds must be non-negative")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ConfigError(f"boosted learning_rate must lie in (0, 1], got {self.learning_rate}")
        if self.patience is not None and self.patience < 1:
            raise ConfigError("boosted patience must be at least 1 or null")
        _validate_tree_params(self, 'boosted')


def _validate_tree_params(params, name: str):
    if params.max_depth is not None and params.max_depth < 0:
        raise ConfigError(f"{name} max_depth must be non-negative or null")
    if params.min_leaf < 1:
        raise ConfigError(f"{name} min_leaf must be at least 1")
    if not 0.0 < params.feature_subsample <= 1.0:
        raise ConfigError(f"{name} feature_subsample must lie in (0, 1]")
    if not 2 <= params.max_bins <= 1024:
        raise ConfigError(f"{name} max_bins must lie in [2, 1024]")


@dataclass
class ModelConfig:
    algorithms: List[str] = field(default_factory=lambda: list(ALGORITHMS))
    forest: ForestParams = field(default_factory=ForestParams)
    boosted: BoostParams = field(default_factory=BoostParams)

    def validate(self):
        if not self.algorithms:
            raise ConfigError("model.algorithms must not be empty")
        unknown = [a for a in self.algorithms if a not in ALGORITHMS]
        if unknown:
            raise ConfigError(f"unknown algorithms: {unknown}")
        self.forest.validate()
        self.boosted.validate()


@dataclass
class WindowConfig:
    min_train: int = 8
    min_test_rows: int = 30

    def validate(self):
        if self.min_train < 2:
            raise ConfigError("windows.min_train must be at least 2")
        if self.min_test_rows < 2:
            raise ConfigError("windows.min_test_rows must be at least 2")


def _default_periods() -> Dict[str, List[int]]:
    return {
        'Pre-pandemic': [2017, 2019],
        'Pandemic': [2020, 2021],
        'Recovery': [2022, 2024],
    }


@dataclass
class EvaluationConfig:
    hac_lag: Optional[int] = None
    periods: Dict[str, List[int]] = field(default_factory=_default_periods)
    top_n: int = 10

    def validate(self):
        if self.hac_lag is not None and self.hac_lag < 0:
            raise ConfigError("evaluation.hac_lag must be non-negative or null")
        if self.top_n < 1:
            raise ConfigError("evaluation.top_n must be at least 1")
        for name, bounds in self.periods.items():
            if len(bounds) != 2 or bounds[0] > bounds[1]:
                raise ConfigError(f"period {name!r} must be [first_year, last_year]")


@dataclass
class GridConfig:
    max_depth: List[int] = field(default_factory=lambda: [4, 8])
    n_trees: List[int] = field(default_factory=lambda: [50, 200])
    learning_rate: List[float] = field(default_factory=lambda: [0.05, 0.1])


@dataclass
class RunConfig:
    seed: int = 7
    jobs: Optional[int] = None
    paths: PathsConfig = field(default_factory=PathsConfig)
    ingestion: IngestionConfig = field(default_factory=IngestionConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    windows: WindowConfig = field(default_factory=WindowConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    grid: GridConfig = field(default_factory=GridConfig)

    def validate(self) -> 'RunConfig':
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        for section in (self.ingestion, self.synth, self.features, self.dataset,
                        self.model, self.windows, self.evaluation):
            section.validate()
        return self

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def config_hash(config: RunConfig) -> str:
    """Hash of everything that can change results; paths and worker count excluded"""
    data = config.to_dict()
    data.pop('paths', None)
    data.pop('jobs', None)
    return stable_hash(data)


def _coerce(value: Any, hint: Any, name: str) -> Any:
    origin = get_origin(hint)
    if origin is Union:
        args = [a for a in get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], name)
    if dataclasses.is_dataclass(hint):
        return _section(hint, value, name)
    if origin in (list, List):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{name} must be a list")
        (item_hint,) = get_args(hint)
        return [_coerce(v, item_hint, f"{name}[{i}]") for i, v in enumerate(value)]
    if origin in (dict, Dict):
        if not isinstance(value, dict):
            raise ConfigError(f"{name} must be a mapping")
        _, value_hint = get_args(hint)
        return {str(k): _coerce(v, value_hint, f"{name}.{k}") for k, v in value.items()}
    if value is None:
        raise ConfigError(f"{name} must not be null")
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number")
        return float(value)
    if hint is str:
        if not isinstance(value, (str, int)):
            raise ConfigError(f"{name} must be a string")
        return str(value)
    return value


def _section(cls, data: Any, name: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{name or 'config'} must be a mapping")
    hints = get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name or 'config'}: {sorted(unknown)}")
    kwargs = {key: _coerce(value, hints[key], f"{name}.{key}" if name else key)
              for key, value in data.items()}
    return cls(**kwargs)


def config_from_dict(data: Optional[Dict[str, Any]]) -> RunConfig:
    """Build and validate a RunConfig from a plain mapping"""
    return _section(RunConfig, data or {}, '').validate()


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """
    Load a YAML run configuration

    Args:
        path: Path to the YAML file; None gives the built-in defaults

    Returns:
        A validated RunConfig
    """
    if path is None:
        return RunConfig().validate()
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigError(f"config file {path} is not valid YAML: {e}")
    return config_from_dict(data)


def apply_overrides(config: RunConfig, **overrides: Any) -> RunConfig:
    """Apply CLI flag overrides given as dotted names, e.g. {'synth.sectors': 12}"""
    for dotted, value in overrides.items():
        if value is None:
            continue
        target = config
        parts = dotted.split('.')
        for part in parts[:-1]:
            target = getattr(target, part)
        setattr(target, parts[-1], value)
    return config.validate()
