from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple, Sequence, Iterable, List

import numpy as np

ADDITIVE_STATS = ('clicks', 'conversions', 'spend', 'revenue')
"""Feedback statistics summed over ads when aggregating a group."""

CONTEXT_PREFIX = 'ctx_'


def is_rate_stat(name: str) -> bool:
    """Tells whether a feedback column holds a rate (e.g. `bounce_rate`).
    Rates are averaged with clicks as weights instead of being summed.

    :param name: column name

    """
    return name.endswith('_rate')


@dataclass(frozen=True)
class FeatureVector:
    """Features of an ad or an ad group.

    Missing values are kept as None, never as 0.

    """
    stats: Dict[str, Optional[float]] = field(default_factory=dict)
    """Feedback statistics and activity metrics by name."""

    context: Optional[Tuple[float, ...]] = None
    """Contextual features (group centroid embedding components)."""

    def get(self, name: str) -> Optional[float]:
        return self.stats.get(name)

    def is_missing(self, name: str) -> bool:
        return self.stats.get(name) is None

    @property
    def names(self) -> List[str]:
        return list(self.stats.keys())

    def with_context(self, context: Optional[Sequence[float]]) -> 'FeatureVector':
        return FeatureVector(
            stats=dict(self.stats),
            context=None if context is None else tuple(float(value) for value in context),
        )

    def as_row(self, stat_names: Sequence[str], context_dim: int = 0) -> np.ndarray:
        """Returns features as a float row, NaN marking missing values.

        :param stat_names: statistic names in column order
        :param context_dim: number of contextual columns to append

        """
        row = np.full(len(stat_names) + context_dim, np.nan)

        for idx, name in enumerate(stat_names):
            value = self.stats.get(name)
            if value is not None:
                row[idx] = value

        context = self.context

        if context_dim and context is not None:
            row[len(stat_names):] = context[:context_dim]

        return row


def feature_names(stat_names: Sequence[str], context_dim: int) -> List[str]:
    """Returns design matrix column names."""
    return list(stat_names) + [f'{CONTEXT_PREFIX}{idx}' for idx in range(context_dim)]


def collect_stat_names(vectors: Iterable[FeatureVector]) -> List[str]:
    """Returns statistic names in first-seen order over the given vectors."""
    seen = {}

    for vector in vectors:
        for name in vector.stats:
            seen.setdefault(name, None)

    return list(seen)
