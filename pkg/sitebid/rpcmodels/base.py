from typing import Sequence, Union, List, Optional, Type

import numpy as np

from ..exceptions import CheckpointError, ValidationError
from ..features import FeatureVector, collect_stat_names, feature_names
from ..samples import GroupSample, canonical_order, with_response
from ..utils import get_registered_rpc_model

if False:  # pragma: nocover
    from ..config import RunConfig  # noqa

FORMAT_MARKER = 'sitebid-rpc-model'

TypeFeatures = Union[GroupSample, FeatureVector]


class RpcModelBase:
    """Base class for RPC prediction models.

    Heirs implement `_fit`, `_predict_matrix` and the text body codec.
    Models fit on samples with responses, weighting by clicks.

    """
    alias: str = None
    """Model type alias to address it from config and command line."""

    title: str = None
    """Title to show in reports."""

    format_version: int = 1
    """Version of the persisted text body."""

    def __init__(self, use_context: bool = True):
        self.use_context = use_context
        self.stat_names: List[str] = []
        self.context_dim: int = 0

    @classmethod
    def get_alias(cls) -> str:
        """Returns model type alias."""

        if cls.alias is None:
            cls.alias = cls.__name__

        return cls.alias

    def __str__(self) -> str:
        return self.__class__.get_alias()

    @classmethod
    def from_config(cls, config: 'RunConfig') -> 'RpcModelBase':
        """Heirs may override this to pick their knobs from a run config."""
        return cls()

    @property
    def feature_names(self) -> List[str]:
        return feature_names(self.stat_names, self.context_dim)

    def matrix(self, items: Sequence[TypeFeatures]) -> np.ndarray:
        """Returns design matrix (NaN for missing) for samples or feature vectors."""
        rows = [
            (item.features if isinstance(item, GroupSample) else item).as_row(self.stat_names, self.context_dim)
            for item in items
        ]
        return np.array(rows, dtype=np.float64).reshape(len(rows), len(self.feature_names))

    def fit(self, train: Sequence[GroupSample], val: Sequence[GroupSample] = None) -> 'RpcModelBase':
        """Fits the model on training samples having responses.

        :param train:
        :param val: validation samples for tuning; ignored by models without knobs to tune

        """
        train = canonical_order(with_response(train))

        if not train:
            raise ValidationError('no training samples with response')

        self.stat_names = sorted(collect_stat_names(sample.features for sample in train))

        contexts = [sample.features.context for sample in train]
        self.context_dim = 0

        if self.use_context and all(contexts):
            self.context_dim = min(len(context) for context in contexts)

        x = self.matrix(train)
        y = np.array([sample.rpc for sample in train], dtype=np.float64)
        w = np.array([sample.clicks_weight for sample in train], dtype=np.float64)

        val = canonical_order(with_response(val or []))

        self._fit(x, y, w, val)

        return self

    def _fit(self, x: np.ndarray, y: np.ndarray, w: np.ndarray, val: List[GroupSample]):
        raise NotImplementedError  # pragma: nocover

    def predict(self, items: Sequence[TypeFeatures]) -> np.ndarray:
        """Predicts RPC for every sample or feature vector."""
        return self._predict_matrix(self.matrix(items))

    def _predict_matrix(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError  # pragma: nocover

    def dumps(self) -> str:
        """Serializes the model into versioned text. Floats round-trip exactly."""
        lines = [
            f'{FORMAT_MARKER}\t{self.get_alias()}\t{self.format_version}',
            '\t'.join(['stats'] + list(self.stat_names)),
            f'context_dim\t{self.context_dim}',
        ]
        lines.extend(self._dump_body())
        return '\n'.join(lines) + '\n'

    def _dump_body(self) -> List[str]:
        raise NotImplementedError  # pragma: nocover

    def _load_body(self, lines: List[List[str]]):
        raise NotImplementedError  # pragma: nocover


def predict(model: RpcModelBase, features: TypeFeatures) -> float:
    """Predicts RPC for a single feature vector (or sample)."""
    return float(model.predict([features])[0])


def loads_rpc_model(text: str) -> RpcModelBase:
    """Restores a model persisted with `dumps()`.

    :param text:

    :raises CheckpointError:

    """
    lines = [line.split('\t') for line in text.splitlines() if line]

    if len(lines) < 3 or lines[0][0] != FORMAT_MARKER or len(lines[0]) != 3:
        raise CheckpointError('not a sitebid RPC model')

    _, alias, version = lines[0]
    model_cls: Type[RpcModelBase] = get_registered_rpc_model(alias)

    if str(model_cls.format_version) != version:
        raise CheckpointError(f'unsupported `{alias}` model version {version}')

    if lines[1][0] != 'stats' or lines[2][0] != 'context_dim':
        raise CheckpointError('model schema lines are missing')

    model = model_cls()
    model.stat_names = lines[1][1:]

    try:
        model.context_dim = int(lines[2][1])
        model._load_body(lines[3:])

    except (ValueError, IndexError) as e:
        raise CheckpointError(f'malformed `{alias}` model: {e}')

    return model


def parse_floats(values: Sequence[str]) -> np.ndarray:
    return np.array([float(value) for value in values], dtype=np.float64)


def format_floats(values: Sequence[float]) -> List[str]:
    return [repr(float(value)) for value in values]


def expect(line: List[str], key: str, size: Optional[int] = None) -> List[str]:
    """Checks a body line key and returns its values."""
    if not line or line[0] != key:
        raise CheckpointError(f'expected `{key}` line')

    values = line[1:]

    if size is not None and len(values) != size:
        raise CheckpointError(f'`{key}` line has {len(values)} values, expected {size}')

    return values


def weighted_mean(y: np.ndarray, w: np.ndarray) -> float:
    return float(np.sum(w * y) / np.sum(w))

