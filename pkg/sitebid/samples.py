"""Group level training samples: feature aggregation, scoring, dataset splitting."""
import math
from dataclasses import dataclass
from typing import Tuple, Optional, Mapping, Sequence, Dict, List, Iterable, Union

import numpy as np

from .clustering import AdGroup
from .exceptions import ValidationError
from .features import FeatureVector, is_rate_stat, collect_stat_names
from .ingest import Ad

TypeOutcomes = Mapping[str, Tuple[float, float]]


@dataclass(frozen=True)
class GroupSample:
    """Aggregated features and response of an ad group."""

    group_id: str
    members: Tuple[str, ...]
    features: FeatureVector
    rpc: Optional[float]
    """Response: revenue per click. None when the group got no clicks."""

    clicks_weight: float

    @property
    def has_response(self) -> bool:
        return self.rpc is not None and self.clicks_weight > 0


def _aggregate_stat(name: str, ads: Sequence[Ad]) -> Optional[float]:
    values = [(ad.feedback.get(name), ad.feedback.get('clicks')) for ad in ads]
    values = [(value, clicks) for value, clicks in values if value is not None]

    if not values:
        return None

    if len(values) == 1:
        return values[0][0]

    if not is_rate_stat(name):
        return sum(value for value, _ in values)

    weight = sum(clicks or 0.0 for _, clicks in values)

    if weight <= 0:
        return sum(value for value, _ in values) / len(values)

    return sum(value * (clicks or 0.0) for value, clicks in values) / weight


def aggregate_features(
        group: AdGroup,
        ads: Mapping[str, Ad],
        outcomes: TypeOutcomes = None
) -> GroupSample:
    """Aggregates member ads features into a group sample.

    Additive stats are summed and rate stats (`*_rate`) averaged with clicks
    as weights, missing values ignored. The group centroid provides context.

    :param group:
    :param ads: catalog by ad id
    :param outcomes: ad id -> (clicks, revenue) of the response period.
        When not given the response is historical revenue / clicks.

    """
    try:
        members = [ads[ad_id] for ad_id in group.member_ad_ids]

    except KeyError as e:
        raise ValidationError(f'group `{group.group_id}` member {e} is not in the catalog', field='ad_id')

    stats: Dict[str, Optional[float]] = {
        name: _aggregate_stat(name, members)
        for name in collect_stat_names(ad.feedback for ad in members)
    }

    clicks, revenue = stats.get('clicks'), stats.get('revenue')

    if outcomes is None:
        response_clicks, response_revenue = clicks or 0.0, revenue

    else:
        known = [outcomes[ad_id] for ad_id in group.member_ad_ids if ad_id in outcomes]
        response_clicks = sum(item[0] for item in known)
        response_revenue = sum(item[1] for item in known) if known else None

    rpc = None

    if response_clicks > 0 and response_revenue is not None:
        rpc = response_revenue / response_clicks

    return GroupSample(
        group_id=group.group_id,
        members=tuple(group.member_ad_ids),
        features=FeatureVector(stats=stats).with_context(group.centroid),
        rpc=rpc,
        clicks_weight=float(response_clicks),
    )


def score_arrays(preds: Sequence[float], y: Sequence[float], weights: Sequence[float]) -> Dict[str, float]:
    """Returns clicks-weighted mean squared and absolute errors.

    :param preds:
    :param y: responses
    :param weights: clicks

    """
    preds, y, weights = (np.asarray(item, dtype=np.float64) for item in (preds, y, weights))

    if not (len(preds) == len(y) == len(weights)):
        raise ValidationError(f'{len(preds)} predictions for {len(y)} samples')

    total = weights.sum()

    if not total > 0:
        raise ValidationError('samples carry no weight')

    errors = preds - y

    return {
        'wmse': float(np.sum(weights * errors ** 2) / total),
        'wmae': float(np.sum(weights * np.abs(errors)) / total),
    }


def score(preds: Sequence[float], samples: Sequence[GroupSample]) -> Dict[str, float]:
    """Scores predictions against sample responses: {wmse, wmae}.

    :param preds:
    :param samples: samples with responses

    """
    if len(preds) != len(samples):
        raise ValidationError(f'{len(preds)} predictions for {len(samples)} samples')

    if any(sample.rpc is None for sample in samples):
        raise ValidationError('cannot score samples without response')

    return score_arrays(preds, [sample.rpc for sample in samples], [sample.clicks_weight for sample in samples])


def split_dataset(
        samples: Sequence,
        ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1),
        seed: int = 0
) -> Tuple[list, list, list]:
    """Splits samples into train, validation and test after a seeded shuffle.

    Validation and test sizes are floored, the remainder goes to train.

    :param samples: at least 10
    :param ratios:
    :param seed:

    """
    n = len(samples)

    if n < 10:
        raise ValidationError(f'at least 10 samples are required to split, got {n}')

    if len(ratios) != 3 or any(ratio < 0 for ratio in ratios) or not math.isclose(sum(ratios), 1.0):
        raise ValidationError('split ratios must be three non-negative shares summing to 1')

    order = np.random.default_rng(seed).permutation(n)
    n_val, n_test = int(math.floor(n * ratios[1])), int(math.floor(n * ratios[2]))
    n_train = n - n_val - n_test

    shuffled = [samples[idx] for idx in order]

    return shuffled[:n_train], shuffled[n_train:n_train + n_val], shuffled[n_train + n_val:]


def with_response(samples: Iterable[GroupSample]) -> List[GroupSample]:
    return [sample for sample in samples if sample.has_response]


def canonical_order(samples: Iterable[GroupSample]) -> List[GroupSample]:
    """Orders samples by member ad ids so fitting does not depend on group naming."""
    return sorted(samples, key=lambda sample: sample.members)


def _overview(samples: Sequence[GroupSample]) -> Dict[str, float]:
    names = collect_stat_names(sample.features for sample in samples)
    cells = len(samples) * len(names)
    missing = sum(1 for sample in samples for name in names if sample.features.is_missing(name))
    responses = [sample.rpc for sample in samples if sample.has_response]

    return {
        'sample_size': len(samples),
        'missing_ratio': missing / cells if cells else 0.0,
        'response_ratio': len(responses) / len(samples) if samples else 0.0,
        'response_variance': float(np.var(responses)) if responses else 0.0,
    }


def dataset_overview(
        ad_samples: Sequence[GroupSample],
        group_samples: Sequence[GroupSample]
) -> Dict[str, Dict[str, Union[int, float]]]:
    """Summarizes datasets of singular ads and of ad groups.

    Response variance is reported relative to the larger of the two levels.

    :param ad_samples:
    :param group_samples:

    """
    overview = {'singular': _overview(ad_samples), 'cluster': _overview(group_samples)}
    top = max(level['response_variance'] for level in overview.values())

    for level in overview.values():
        level['response_variance'] = level['response_variance'] / top if top > 0 else 0.0

    return overview
