"""Two-stage ad grouping: product type classification, then agglomerative
clustering by intention embedding within every product type.

"""
import csv
import logging
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Mapping, Optional, Tuple, Dict, Union, Iterable

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .config import TrainConfig
from .exceptions import ClassifierError, ValidationError
from .ingest import Ad
from .intent import DTYPE, init_uniform
from .settings import CLUSTER_THRESHOLD
from .utils import map_ordered

LOGGER = logging.getLogger(__name__)

GROUPS_COLUMNS = ('group_id', 'product_type', 'ad_id')


@dataclass(frozen=True)
class AdGroup:
    """Ads sharing a product type and a customer intention."""

    group_id: str
    product_type: str
    member_ad_ids: Tuple[str, ...]
    centroid: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.member_ad_ids)


class ProductTypeClassifier(nn.Module):
    """Feed-forward network predicting a product type from an intention embedding."""

    def __init__(self, labels: Iterable[str], d_in: int, cfg: TrainConfig):
        super().__init__()

        self.labels: Tuple[str, ...] = tuple(sorted(set(labels)))
        self.cfg = cfg
        self.accuracy: Optional[float] = None
        """Held-out accuracy measured after training."""

        self.layers = nn.Sequential(
            nn.Linear(d_in, cfg.d_model),
            nn.Tanh(),
            nn.Linear(cfg.d_model, len(self.labels)),
        )
        self.to(DTYPE)
        init_uniform(self, cfg.seed)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.layers(x)

    def predict_proba(self, embeddings: Union[np.ndarray, Sequence[np.ndarray]]) -> np.ndarray:
        """Returns class probabilities. A single embedding gives a 1-D vector.

        :param embeddings:

        """
        x = np.asarray(embeddings, dtype=np.float64)
        single = x.ndim == 1

        with torch.no_grad():
            probs = torch.softmax(self(torch.from_numpy(np.atleast_2d(x))), dim=-1).numpy()

        return probs[0] if single else probs

    def predict(self, embeddings: Union[np.ndarray, Sequence[np.ndarray]]) -> List[str]:
        probs = np.atleast_2d(self.predict_proba(embeddings))
        # argmax picks the first maximum: ties go to the smallest label index.
        return [self.labels[idx] for idx in np.argmax(probs, axis=1)]

    def score(self, embeddings: Sequence[np.ndarray], labels: Sequence[str]) -> float:
        """Returns accuracy on the given labelled embeddings."""
        if not len(labels):
            raise ValidationError('nothing to score')

        predicted = self.predict(embeddings)
        return sum(1 for got, expected in zip(predicted, labels) if got == expected) / len(labels)


def training_set(ads: Iterable[Ad], embeddings: Mapping[str, np.ndarray]) -> Tuple[np.ndarray, List[str]]:
    """Returns embeddings and labels of single-item ads having a catalog product type."""
    vectors, labels = [], []

    for ad in sorted(ads, key=lambda ad: ad.ad_id):

        if not (ad.is_single_item and ad.product_type):
            continue

        if ad.ad_id not in embeddings:
            raise ValidationError(f'ad `{ad.ad_id}` is not embedded', field='ad_id')

        vectors.append(embeddings[ad.ad_id])
        labels.append(ad.product_type)

    return np.array(vectors, dtype=np.float64), labels


def train_classifier(
        vectors: np.ndarray,
        labels: Sequence[str],
        cfg: TrainConfig,
        holdout: float = 0.2
) -> ProductTypeClassifier:
    """Trains a product type classifier with cross-entropy and ADAM.

    :param vectors: embeddings of labelled single-item ads
    :param labels: product types aligned with vectors
    :param cfg: `d_model` is the hidden width
    :param holdout: share of samples held out to measure accuracy.
        With no held-out samples accuracy is measured on the training set.

    :raises ClassifierError: on fewer than two distinct labels

    """
    vectors = np.asarray(vectors, dtype=np.float64)

    if len(set(labels)) < 2:
        raise ClassifierError('product type classifier needs at least two distinct labels')

    if len(vectors) != len(labels):
        raise ValidationError('embeddings and labels are not aligned')

    clf = ProductTypeClassifier(labels, vectors.shape[1], cfg)
    index = {label: idx for idx, label in enumerate(clf.labels)}

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(labels))
    n_holdout = int(len(labels) * holdout)

    held, trained = order[:n_holdout], order[n_holdout:]

    x = torch.from_numpy(vectors[trained])
    y = torch.tensor([index[labels[idx]] for idx in trained], dtype=torch.long)

    optimizer = torch.optim.Adam(
        clf.parameters(),
        lr=cfg.learning_rate,
        betas=(cfg.adam_beta1, cfg.adam_beta2),
        eps=cfg.adam_epsilon,
    )

    for _ in range(cfg.epochs):
        permutation = torch.from_numpy(rng.permutation(len(trained)))

        for start in range(0, len(trained), cfg.batch_size):
            batch = permutation[start:start + cfg.batch_size]
            loss = F.cross_entropy(clf(x[batch]), y[batch])

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

    scored = held if n_holdout else trained
    clf.accuracy = clf.score(vectors[scored], [labels[idx] for idx in scored])

    LOGGER.info(
        'Product type classifier: %s labels, %s samples, accuracy %.4f',
        len(clf.labels), len(labels), clf.accuracy)

    return clf


def assign_product_type(
        ad: Ad,
        embedding: np.ndarray,
        clf: Optional[ProductTypeClassifier],
        default_label: str = None
) -> str:
    """Returns a product type for an ad.

    Single-item ads with a catalog product type keep it,
    others get the classifier's most probable label.

    :param ad:
    :param embedding:
    :param clf: trained classifier
    :param default_label: label to use when no classifier is available

    :raises ClassifierError: multi-item ad and no classifier (nor default label)

    """
    if ad.is_single_item and ad.product_type:
        return ad.product_type

    if clf is None:
        if default_label is not None:
            return default_label
        raise ClassifierError(f'ad `{ad.ad_id}` needs a trained product type classifier')

    return clf.predict(embedding)[0]


def agglomerate(embeddings: Sequence[np.ndarray], threshold: float = CLUSTER_THRESHOLD) -> List[List[int]]:
    """Average-linkage agglomerative clustering under cosine distance.

    Merges the closest pair of clusters while their linkage is not above
    `threshold`; ties go to the smallest index pair. Threshold 0 or less
    yields singletons.

    Returns clusters as sorted index lists ordered by their first index.

    :param embeddings: unit vectors
    :param threshold: cosine distance in [0, 2)

    """
    x = np.asarray(embeddings, dtype=np.float64)
    n = len(x)

    if n == 0:
        return []

    if threshold <= 0 or n == 1:
        return [[idx] for idx in range(n)]

    norms = np.linalg.norm(x, axis=1)
    norms[norms == 0] = 1.0
    unit = x / norms[:, None]

    distance = 1.0 - unit @ unit.T
    sizes = np.ones(n)
    members: Dict[int, List[int]] = {idx: [idx] for idx in range(n)}

    linkage = distance.copy()
    linkage[np.tril_indices(n)] = np.inf

    while len(members) > 1:
        flat = int(np.argmin(linkage))
        i, j = divmod(flat, n)

        if linkage[i, j] > threshold:
            break

        # Lance-Williams update for average linkage; cluster i absorbs j.
        merged = (sizes[i] * distance[i] + sizes[j] * distance[j]) / (sizes[i] + sizes[j])
        distance[i, :] = merged
        distance[:, i] = merged
        sizes[i] += sizes[j]

        members[i].extend(members.pop(j))

        linkage[j, :] = np.inf
        linkage[:, j] = np.inf

        active = np.array(sorted(members))
        upper, lower = active[active > i], active[active < i]
        linkage[i, upper] = merged[upper]
        linkage[lower, i] = merged[lower]

    return [sorted(members[idx]) for idx in sorted(members)]


def group_centroid(vectors: Sequence[np.ndarray]) -> Tuple[float, ...]:
    """Returns normalized mean of member embeddings. A singleton keeps its own vector."""
    if len(vectors) == 1:
        return tuple(float(value) for value in vectors[0])

    mean = np.mean(np.asarray(vectors, dtype=np.float64), axis=0)
    norm = np.linalg.norm(mean)

    if norm > 0:
        mean = mean / norm

    return tuple(float(value) for value in mean)


def build_groups(
        ads: Iterable[Ad],
        embeddings: Mapping[str, np.ndarray],
        clf: Optional[ProductTypeClassifier],
        threshold: float = CLUSTER_THRESHOLD,
        threads: int = 1,
        default_label: str = None
) -> List[AdGroup]:
    """Groups ads: product type assignment followed by per-type agglomeration.

    Group ids are `<product_type>-<ordinal>`; groups are ordered by
    product type, then by smallest member ad id.

    :param ads:
    :param embeddings: unit vector per ad id
    :param clf: product type classifier for multi-item or unlabelled ads
    :param threshold: cosine distance threshold
    :param threads: product types clustered concurrently
    :param default_label: product type for unresolved ads when there is no classifier

    """
    by_type: Dict[str, List[str]] = defaultdict(list)

    for ad in sorted(ads, key=lambda ad: ad.ad_id):

        if ad.ad_id not in embeddings:
            raise ValidationError(f'ad `{ad.ad_id}` is not embedded', field='ad_id')

        label = assign_product_type(ad, embeddings[ad.ad_id], clf, default_label=default_label)
        by_type[label].append(ad.ad_id)

    product_types = sorted(by_type)

    def cluster_type(product_type: str) -> List[AdGroup]:
        ad_ids = by_type[product_type]
        vectors = [np.asarray(embeddings[ad_id], dtype=np.float64) for ad_id in ad_ids]

        groups = []

        for ordinal, cluster in enumerate(agglomerate(vectors, threshold)):
            groups.append(AdGroup(
                group_id=f'{product_type}-{ordinal}',
                product_type=product_type,
                member_ad_ids=tuple(ad_ids[idx] for idx in cluster),
                centroid=group_centroid([vectors[idx] for idx in cluster]),
            ))

        LOGGER.debug('Product type `%s`: %s ads in %s groups', product_type, len(ad_ids), len(groups))

        return groups

    groups = [group for chunk in map_ordered(cluster_type, product_types, threads=threads) for group in chunk]

    LOGGER.info('%s product types, %s groups', len(product_types), len(groups))

    return groups


def reduction_ratio(groups: Sequence[AdGroup], n_ads: int = None) -> float:
    """Returns the number of groups per ad.

    :param groups:
    :param n_ads: defaults to the number of grouped ads

    """
    if n_ads is None:
        n_ads = sum(len(group) for group in groups)

    if not n_ads:
        raise ValidationError('no ads to group')

    return len(groups) / n_ads


def write_groups(groups: Iterable[AdGroup], path: Union[str, Path]):

    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(GROUPS_COLUMNS)

        for group in groups:
            for ad_id in group.member_ad_ids:
                writer.writerow([group.group_id, group.product_type, ad_id])


def read_groups(path: Union[str, Path], embeddings: Mapping[str, np.ndarray]) -> List[AdGroup]:
    """Reads groups CSV recomputing centroids from member embeddings.

    :param path:
    :param embeddings:

    """
    members: Dict[str, List[str]] = {}
    types: Dict[str, str] = {}
    seen = set()

    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)

        if reader.fieldnames is None or list(reader.fieldnames) != list(GROUPS_COLUMNS):
            raise ValidationError(f"groups header must be `{','.join(GROUPS_COLUMNS)}`", line=1)

        for row in reader:
            line = reader.line_num
            group_id, product_type, ad_id = row['group_id'], row['product_type'], row['ad_id']

            if ad_id in seen:
                raise ValidationError(f'ad `{ad_id}` belongs to several groups', line=line, field='ad_id')

            if types.setdefault(group_id, product_type) != product_type:
                raise ValidationError('group spans two product types', line=line, field='product_type')

            if ad_id not in embeddings:
                raise ValidationError(f'ad `{ad_id}` is not embedded', line=line, field='ad_id')

            seen.add(ad_id)
            members.setdefault(group_id, []).append(ad_id)

    return [
        AdGroup(
            group_id=group_id,
            product_type=types[group_id],
            member_ad_ids=tuple(ad_ids),
            centroid=group_centroid([np.asarray(embeddings[ad_id], dtype=np.float64) for ad_id in ad_ids]),
        )
        for group_id, ad_ids in members.items()
    ]
