import hashlib
from dataclasses import dataclass, field, fields, replace, is_dataclass
from pathlib import Path
from typing import Optional, Dict, Mapping, Any, Union, List

from .exceptions import SiteBidConfigurationError
from .settings import (
    SEQ_LEN, VOCAB_SIZE, CLUSTER_THRESHOLD, GBRT_N_TREES, GBRT_MAX_DEPTH, GBRT_LEARNING_RATE,
    GBRT_MIN_LEAF_WEIGHT, LINEAR_L2, RPS_TARGET,
)

_NONE = 'none'


@dataclass(frozen=True)
class TokenizerConfig:

    seq_len: int = SEQ_LEN
    """Token sequence length (L)."""

    vocab_size: int = VOCAB_SIZE
    """Vocabulary capacity including pad/unk."""


@dataclass(frozen=True)
class TrainConfig:
    """Training knobs shared by the intention embedding network
    and the product type classifier.

    Defaults are desk-scale; n_layers=3, d_out=512 reproduce the production shape.

    """
    learning_rate: float = 0.005
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 64
    epochs: int = 10
    seed: int = 0
    n_layers: int = 2
    n_heads: int = 4
    d_model: int = 32
    d_out: int = 32
    ff_mult: int = 2

    def validate(self) -> 'TrainConfig':

        for item in fields(self):
            value = getattr(self, item.name)

            if item.name in ('seed',):
                continue

            if item.name.startswith('adam_') and item.name != 'adam_epsilon':
                if not 0 <= value < 1:
                    raise SiteBidConfigurationError(f'`{item.name}` must be within [0, 1)')
                continue

            if item.name == 'learning_rate':
                if value < 0:
                    raise SiteBidConfigurationError('`learning_rate` must be non-negative')
                continue

            if value <= 0:
                raise SiteBidConfigurationError(f'`{item.name}` must be positive')

        if self.d_model % self.n_heads:
            raise SiteBidConfigurationError('`d_model` must be divisible by `n_heads`')

        return self


@dataclass(frozen=True)
class ClusterConfig:

    threshold: float = CLUSTER_THRESHOLD
    """Cosine distance at which merging stops. 0 means singleton groups."""


@dataclass(frozen=True)
class LinearConfig:

    l2: float = LINEAR_L2


@dataclass(frozen=True)
class GbrtConfig:

    n_trees: int = GBRT_N_TREES
    max_depth: int = GBRT_MAX_DEPTH
    learning_rate: float = GBRT_LEARNING_RATE
    min_leaf_weight: float = GBRT_MIN_LEAF_WEIGHT
    subsample: float = 1.0
    """Row fraction drawn (seeded) for every tree. 1.0 disables sampling."""
    seed: int = 0


@dataclass(frozen=True)
class BidConfig:

    mode: str = 'target'
    """`target` (RPS goal) or `budget`."""

    rps_target: float = RPS_TARGET
    budget: Optional[float] = None


@dataclass(frozen=True)
class WorldConfig:
    """Synthetic SEM world knobs."""

    n_ads: int = 600
    n_product_types: int = 3
    n_intention_themes: int = 4
    """Themes per product type."""

    theme_words: int = 6
    product_words: int = 4
    filler_words: int = 30
    queries_per_theme: int = 12

    max_items: int = 4
    single_item_share: float = 0.4

    rpc_mean: float = 1.0
    rpc_theme_sigma: float = 0.6
    rpc_ad_sigma: float = 0.1

    click_slope_mean: float = 2.0
    click_slope_sigma: float = 0.3

    reference_bid: float = 0.3
    history_duration: float = 28.0
    label_duration: float = 7.0

    feedback_sparsity: float = 0.5
    bounce_missing: float = 0.3
    noise_scale: float = 0.5
    seed: int = 0

    def validate(self) -> 'WorldConfig':

        for name in ('single_item_share', 'feedback_sparsity', 'bounce_missing'):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise SiteBidConfigurationError(f'`{name}` must be a probability')

        for name in (
            'n_ads', 'n_product_types', 'n_intention_themes', 'theme_words', 'product_words',
            'queries_per_theme', 'max_items', 'rpc_mean', 'click_slope_mean', 'reference_bid',
            'history_duration', 'label_duration',
        ):
            if getattr(self, name) <= 0:
                raise SiteBidConfigurationError(f'`{name}` must be positive')

        for name in ('rpc_theme_sigma', 'rpc_ad_sigma', 'click_slope_sigma', 'noise_scale', 'filler_words'):
            if getattr(self, name) < 0:
                raise SiteBidConfigurationError(f'`{name}` must be non-negative')

        return self


@dataclass(frozen=True)
class ExperimentConfig:
    """Offline/online experiment protocol knobs."""

    seeds: int = 20
    rps_target: float = 1.2
    aa_duration: float = 7.0
    ab_duration: float = 7.0
    model: str = 'gbrt'
    deterministic_clicks: bool = False
    test_policy: str = 'cluster'
    """`cluster` (AB treatment) or `singular` (null treatment)."""


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run depends on.
    A persisted RunConfig fully determines every stage output.

    """
    seed: int = 0
    threads: int = 1
    out: str = '.'

    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    embed: TrainConfig = field(default_factory=TrainConfig)
    classifier: TrainConfig = field(default_factory=lambda: TrainConfig(learning_rate=0.01, epochs=200, d_model=32))
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    linear: LinearConfig = field(default_factory=LinearConfig)
    gbrt: GbrtConfig = field(default_factory=GbrtConfig)
    bid: BidConfig = field(default_factory=BidConfig)
    world: WorldConfig = field(default_factory=WorldConfig)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def stage_seed(self, stage: str) -> int:
        """Derives a seed for a named stage from the global seed.

        :param stage: stage name, e.g. `pairs`

        """
        return derive_seed(self.seed, stage)

    def override(self, values: Mapping[str, Any]) -> 'RunConfig':
        """Returns a copy with dotted keys (e.g. `gbrt.n_trees`) replaced.

        :param values: values may be strings (coerced by field type) or typed

        """
        config = self

        for key, value in values.items():
            config = _set_dotted(config, key.strip(), value)

        return config

    def dumps(self) -> str:
        """Serializes config into the canonical `key = value` text."""
        lines = [f'{key} = {_format_value(value)}' for key, value in sorted(_flatten(self).items())]
        return '\n'.join(lines) + '\n'

    @classmethod
    def loads(cls, text: str, base: 'RunConfig' = None) -> 'RunConfig':
        """Parses `key = value` text.

        :param text:
        :param base: config to apply values onto

        """
        values = {}

        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split('#', 1)[0].strip()

            if not line:
                continue

            if '=' not in line:
                raise SiteBidConfigurationError(f'line {lineno}: expected `key = value`')

            key, value = line.split('=', 1)
            values[key.strip()] = value.strip()

        return (base or cls()).override(values)

    @classmethod
    def load(cls, path: Union[str, Path], base: 'RunConfig' = None) -> 'RunConfig':
        return cls.loads(Path(path).read_text(encoding='utf-8'), base=base)


PRESETS: Dict[str, Dict[str, Any]] = {
    'table2': {
        'world.n_ads': 2000,
        'world.n_product_types': 3,
        'world.n_intention_themes': 8,
        'world.queries_per_theme': 3,
        'world.feedback_sparsity': 0.9,
        'embed.d_model': 16,
        'embed.d_out': 8,
        'embed.n_layers': 1,
        'embed.n_heads': 2,
        'embed.epochs': 30,
        'embed.batch_size': 32,
        'embed.learning_rate': 0.01,
        'tokenizer.seq_len': 32,
        'cluster.threshold': 0.4,
        'gbrt.n_trees': 100,
        'gbrt.max_depth': 4,
        'experiment.seeds': 10,
    },
    'table3': {
        'world.n_ads': 1500,
        'world.n_product_types': 3,
        'world.n_intention_themes': 6,
        'world.queries_per_theme': 3,
        'world.feedback_sparsity': 0.9,
        'embed.d_model': 16,
        'embed.d_out': 8,
        'embed.n_layers': 1,
        'embed.n_heads': 2,
        'embed.epochs': 30,
        'embed.batch_size': 32,
        'embed.learning_rate': 0.01,
        'tokenizer.seq_len': 32,
        'cluster.threshold': 0.4,
        'gbrt.n_trees': 100,
        'gbrt.max_depth': 4,
        'experiment.seeds': 20,
    },
}
"""Named override sets reproducing the offline (table2) and online (table3) protocols."""


def get_preset(name: str) -> Dict[str, Any]:
    try:
        return PRESETS[name]

    except KeyError:
        raise SiteBidConfigurationError(f'Unknown preset `{name}`. Known: {", ".join(sorted(PRESETS))}')


def derive_seed(seed: int, name: str) -> int:
    """Derives a 32-bit seed for a named consumer from a base seed.

    :param seed:
    :param name:

    """
    digest = hashlib.sha256(f'{seed}:{name}'.encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'big')


def _flatten(obj, prefix: str = '') -> Dict[str, Any]:
    result = {}

    for item in fields(obj):
        value = getattr(obj, item.name)
        key = f'{prefix}{item.name}'

        if is_dataclass(value):
            result.update(_flatten(value, f'{key}.'))
        else:
            result[key] = value

    return result


def _format_value(value) -> str:
    if value is None:
        return _NONE
    if isinstance(value, bool):
        return 'true' if value else 'false'
    return repr(value) if isinstance(value, float) else str(value)


def _coerce(value, type_, key: str):
    if not isinstance(value, str):
        return value

    optional = getattr(type_, '__origin__', None) is Union

    if optional:
        if value.lower() == _NONE:
            return None
        type_ = [arg for arg in type_.__args__ if arg is not type(None)][0]

    try:
        if type_ is bool:
            lowered = value.lower()
            if lowered not in ('true', 'false', '1', '0', 'yes', 'no'):
                raise ValueError(value)
            return lowered in ('true', '1', 'yes')

        if type_ is int:
            return int(value)

        if type_ is float:
            return float(value)

    except ValueError:
        raise SiteBidConfigurationError(f'`{key}`: unable to interpret `{value}` as {type_.__name__}')

    return value


def _set_dotted(obj, key: str, value):
    head, _, tail = key.partition('.')
    known: List[str] = [item.name for item in fields(obj)]

    if head not in known:
        raise SiteBidConfigurationError(f'Unknown config key `{key}`')

    item = [item for item in fields(obj) if item.name == head][0]
    current = getattr(obj, head)

    if tail:
        if not is_dataclass(current):
            raise SiteBidConfigurationError(f'Unknown config key `{key}`')
        return replace(obj, **{head: _set_dotted(current, tail, value)})

    if is_dataclass(current):
        raise SiteBidConfigurationError(f'`{key}` is a section, not a value')

    return replace(obj, **{head: _coerce(value, item.type, key)})
