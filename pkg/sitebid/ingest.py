"""Catalog and search-term report ingestion, interactive metric and training pairs."""
import csv
import logging
import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple, Optional, Dict, Mapping, Union, Iterable

import numpy as np

from .exceptions import ValidationError, DuplicateAdError, UndefinedMetricError
from .features import FeatureVector, is_rate_stat

LOGGER = logging.getLogger(__name__)

TypePath = Union[str, Path]

CATALOG_BASE_COLUMNS = ('ad_id', 'product_type', 'total_clicks')
REPORT_COLUMNS = ('ad_id', 'query', 'clicks')
PAIRS_COLUMNS = ('ad_i', 'ad_j', 'im')

NEGATIVE_IM = -1.0

_RE_ITEM_COLUMN = re.compile(r'^item_(title|desc)_(\d+)$')


@dataclass(frozen=True)
class Item:
    """A product behind an ad landing page."""

    title: str
    description: str
    revenue_rank: int


@dataclass(frozen=True)
class Ad:
    """Catalog entry."""

    ad_id: str
    items: Tuple[Item, ...]
    product_type: Optional[str] = None
    total_clicks: int = 0
    feedback: FeatureVector = field(default_factory=FeatureVector)

    def top_items(self, count: int = 3) -> List[Item]:
        """Returns up to `count` items in ascending revenue rank."""
        return sorted(self.items, key=lambda item: item.revenue_rank)[:count]

    @property
    def is_single_item(self) -> bool:
        return len(self.items) == 1


@dataclass(frozen=True)
class SearchTermRecord:
    """A row of a search-term report."""

    ad_id: str
    query: str
    clicks: int


@dataclass(frozen=True)
class AdPair:
    """Two ads with their interactive metric. Ids are stored in canonical order."""

    ad_i: str
    ad_j: str
    im: float

    @property
    def is_negative(self) -> bool:
        return self.im == NEGATIVE_IM


def validate_ad(ad: Ad, line: int = None) -> Ad:
    """Checks Ad invariants.

    :param ad:
    :param line: source line to mention in errors

    """
    if not ad.ad_id:
        raise ValidationError('ad identifier is empty', line=line, field='ad_id')

    if not ad.items:
        raise ValidationError('ad has no items', line=line, field='item_title_1')

    ranks = [item.revenue_rank for item in ad.items]

    if len(set(ranks)) != len(ranks) or min(ranks) < 1:
        raise ValidationError('revenue ranks must be distinct positive integers', line=line, field='items')

    if ad.total_clicks < 0:
        raise ValidationError('must be non-negative', line=line, field='total_clicks')

    return ad


def _parse_count(value: str, *, line: int, field_name: str) -> int:
    value = value.strip()

    if not value:
        return 0

    try:
        count = int(value)

    except ValueError:
        raise ValidationError(f'`{value}` is not an integer', line=line, field=field_name)

    if count < 0:
        raise ValidationError('must be non-negative', line=line, field=field_name)

    return count


def _parse_stat(value: str, *, line: int, field_name: str) -> Optional[float]:
    value = value.strip()

    if not value:
        return None

    try:
        number = float(value)

    except ValueError:
        raise ValidationError(f'`{value}` is not a number', line=line, field=field_name)

    if not math.isfinite(number) or number < 0:
        raise ValidationError('must be a finite non-negative number', line=line, field=field_name)

    if is_rate_stat(field_name) and number > 1:
        raise ValidationError('rate must be within [0, 1]', line=line, field=field_name)

    return number


def _catalog_layout(header: List[str]) -> Tuple[List[int], List[str]]:
    """Returns item ranks and feedback column names declared by a catalog header."""

    if header is None:
        raise ValidationError('catalog header is missing', line=1)

    missing = [column for column in CATALOG_BASE_COLUMNS if column not in header]

    if missing:
        raise ValidationError('catalog header lacks a required column', line=1, field=missing[0])

    if len(set(header)) != len(header):
        raise ValidationError('catalog header contains duplicate columns', line=1)

    titles, descriptions, feedback = set(), set(), []

    for column in header:
        if column in CATALOG_BASE_COLUMNS:
            continue

        matched = _RE_ITEM_COLUMN.match(column)

        if matched:
            kind, rank = matched.groups()
            (titles if kind == 'title' else descriptions).add(int(rank))

        else:
            feedback.append(column)

    if 1 not in titles:
        raise ValidationError('catalog header lacks a required column', line=1, field='item_title_1')

    if descriptions - titles:
        rank = min(descriptions - titles)
        raise ValidationError('description column without a title column', line=1, field=f'item_desc_{rank}')

    return sorted(titles), feedback


def parse_catalog(path: TypePath) -> List[Ad]:
    """Parses and validates an ads catalog CSV.

    Columns: `ad_id,product_type,total_clicks,item_title_1..K,item_desc_1..K,<feedback columns>`.
    Item column index is the item revenue rank. Empty cells mean missing.

    :param path:

    :raises ValidationError: naming line number and field
    :raises DuplicateAdError:

    """
    ads = []
    seen = {}

    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        ranks, feedback_columns = _catalog_layout(reader.fieldnames)

        for row in reader:
            line = reader.line_num

            if None in row or any(value is None for value in row.values()):
                raise ValidationError('row length does not match header', line=line)

            ad_id = row['ad_id'].strip()

            if ad_id in seen:
                raise DuplicateAdError(
                    f'duplicate ad `{ad_id}` (first seen at line {seen[ad_id]})', line=line, field='ad_id')

            items = []

            for rank in ranks:
                title = row[f'item_title_{rank}'].strip()
                description = row.get(f'item_desc_{rank}', '').strip()

                if not title:
                    if description:
                        raise ValidationError('item description without a title', line=line, field=f'item_title_{rank}')
                    continue

                items.append(Item(title=title, description=description, revenue_rank=rank))

            stats = {
                column: _parse_stat(row[column], line=line, field_name=column)
                for column in feedback_columns
            }

            ad = Ad(
                ad_id=ad_id,
                items=tuple(items),
                product_type=row['product_type'].strip() or None,
                total_clicks=_parse_count(row['total_clicks'], line=line, field_name='total_clicks'),
                feedback=FeatureVector(stats=stats),
            )
            ads.append(validate_ad(ad, line=line))
            seen[ad_id] = line

    LOGGER.debug('Parsed %s ads from %s', len(ads), path)

    return ads


def write_catalog(ads: Iterable[Ad], path: TypePath):
    """Writes ads into a catalog CSV (inverse of `parse_catalog`)."""

    ads = list(ads)
    max_rank = max([item.revenue_rank for ad in ads for item in ad.items] or [3])
    max_rank = max(max_rank, 3)

    feedback_columns = []
    for ad in ads:
        for name in ad.feedback.stats:
            if name not in feedback_columns:
                feedback_columns.append(name)

    item_columns = [f'item_title_{rank}' for rank in range(1, max_rank + 1)]
    item_columns += [f'item_desc_{rank}' for rank in range(1, max_rank + 1)]

    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(list(CATALOG_BASE_COLUMNS) + item_columns + feedback_columns)

        for ad in ads:
            by_rank = {item.revenue_rank: item for item in ad.items}
            row = [ad.ad_id, ad.product_type or '', ad.total_clicks]
            row += [by_rank[rank].title if rank in by_rank else '' for rank in range(1, max_rank + 1)]
            row += [by_rank[rank].description if rank in by_rank else '' for rank in range(1, max_rank + 1)]
            row += [_format_number(ad.feedback.get(name)) for name in feedback_columns]
            writer.writerow(row)


def parse_search_terms(path: TypePath) -> List[SearchTermRecord]:
    """Parses a search-term report CSV (`ad_id,query,clicks`).

    :param path:

    :raises ValidationError:

    """
    records = []
    seen = set()

    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)

        if reader.fieldnames is None or list(reader.fieldnames) != list(REPORT_COLUMNS):
            raise ValidationError(f"report header must be `{','.join(REPORT_COLUMNS)}`", line=1)

        for row in reader:
            line = reader.line_num

            if None in row or any(value is None for value in row.values()):
                raise ValidationError('row length does not match header', line=line)

            ad_id = row['ad_id'].strip()
            query = row['query'].strip()

            if not ad_id:
                raise ValidationError('ad identifier is empty', line=line, field='ad_id')

            if not query:
                raise ValidationError('query is empty', line=line, field='query')

            key = (ad_id, query)

            if key in seen:
                raise ValidationError(
                    f'duplicate record for ad `{ad_id}` and query `{query}`', line=line, field='query')

            seen.add(key)

            records.append(SearchTermRecord(
                ad_id=ad_id,
                query=query,
                clicks=_parse_count(row['clicks'], line=line, field_name='clicks'),
            ))

    return records


def write_search_terms(records: Iterable[SearchTermRecord], path: TypePath):

    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(REPORT_COLUMNS)

        for record in records:
            writer.writerow([record.ad_id, record.query, record.clicks])


def validate_report(records: Iterable[SearchTermRecord], ads: Iterable[Ad]) -> Dict[str, int]:
    """Cross-checks report records against a catalog.

    Returns report clicks summed per ad.

    :param records:
    :param ads:

    :raises ValidationError:

    """
    totals = {ad.ad_id: ad.total_clicks for ad in ads}
    sums = defaultdict(int)

    for record in records:
        if record.ad_id not in totals:
            raise ValidationError(f'report references unknown ad `{record.ad_id}`', field='ad_id')
        sums[record.ad_id] += record.clicks

    for ad_id, clicks in sums.items():
        if clicks > totals[ad_id]:
            raise ValidationError(
                f'ad `{ad_id}` has {clicks} report clicks exceeding total_clicks {totals[ad_id]}',
                field='total_clicks')

    return dict(sums)


def interactive_metric(clk_1co2: int, clk_2co1: int, clk_1: int, clk_2: int) -> float:
    """Returns the interactive metric (geometric-mean co-click ratio) of two ads.

    :param clk_1co2: clicks of ad 1 on queries co-clicked with ad 2
    :param clk_2co1: clicks of ad 2 on queries co-clicked with ad 1
    :param clk_1: total clicks of ad 1
    :param clk_2: total clicks of ad 2

    :raises UndefinedMetricError: on zero total clicks

    """
    if clk_1 <= 0 or clk_2 <= 0:
        raise UndefinedMetricError('interactive metric is undefined for ads without clicks')

    if not (0 <= clk_1co2 <= clk_1 and 0 <= clk_2co1 <= clk_2):
        raise ValidationError('co-clicks must be within [0, total clicks]')

    return math.sqrt((clk_1co2 * clk_2co1) / (clk_1 * clk_2))


def build_pairs(
        records: Iterable[SearchTermRecord],
        neg_seed: int,
        totals: Optional[Mapping[str, int]] = None
) -> List[AdPair]:
    """Builds interactive metric training pairs.

    One positive pair per two ads sharing a query; co-clicks are summed over
    all shared queries. Negative pairs (no shared query) are sampled uniformly
    without replacement so that positives/negatives approximates the mean positive metric.

    :param records: validated report records
    :param neg_seed: negative sampling seed
    :param totals: total clicks per ad. Defaults to report clicks summed per ad.

    """
    by_query: Dict[str, Dict[str, int]] = defaultdict(dict)
    sums: Dict[str, int] = defaultdict(int)

    for record in records:
        sums[record.ad_id] += record.clicks

        # Rows without clicks carry no co-click evidence.
        if record.clicks > 0:
            by_query[record.query][record.ad_id] = record.clicks

    if totals is None:
        totals = sums

    excluded = sorted(ad_id for ad_id in sums if totals.get(ad_id, 0) <= 0)

    if excluded:
        LOGGER.warning('%s ads without clicks are excluded from pairs', len(excluded))

    eligible = sorted(ad_id for ad_id in sums if totals.get(ad_id, 0) > 0)
    eligible_set = set(eligible)

    coclicks: Dict[Tuple[str, str], List[int]] = {}

    for query in sorted(by_query):
        ads = sorted(ad_id for ad_id in by_query[query] if ad_id in eligible_set)
        clicks = by_query[query]

        for pos, ad_i in enumerate(ads):
            for ad_j in ads[pos + 1:]:
                accumulated = coclicks.setdefault((ad_i, ad_j), [0, 0])
                accumulated[0] += clicks[ad_i]
                accumulated[1] += clicks[ad_j]

    positives = [
        AdPair(ad_i, ad_j, interactive_metric(co_i, co_j, totals[ad_i], totals[ad_j]))
        for (ad_i, ad_j), (co_i, co_j) in sorted(coclicks.items())
    ]

    negatives = _sample_negatives(eligible, coclicks, positives, neg_seed)

    return sorted(positives + negatives, key=lambda pair: (pair.ad_i, pair.ad_j))


def _sample_negatives(
        eligible: List[str],
        coclicks: Mapping[Tuple[str, str], List[int]],
        positives: List[AdPair],
        seed: int
) -> List[AdPair]:

    if not positives:
        return []

    n_ads = len(eligible)
    available = n_ads * (n_ads - 1) // 2 - len(positives)
    mean_im = sum(pair.im for pair in positives) / len(positives)

    wanted = available if mean_im <= 0 else int(round(len(positives) / mean_im))

    if wanted > available:
        LOGGER.warning(
            'Only %s non co-clicked pairs are available, %s requested by the ratio rule', available, wanted)
        wanted = available

    if wanted <= 0:
        return []

    rng = np.random.default_rng(seed)
    index = {ad_id: idx for idx, ad_id in enumerate(eligible)}
    taken = {(index[ad_i], index[ad_j]) for ad_i, ad_j in coclicks}
    chosen = set()

    if wanted * 2 >= available:
        candidates = [
            (i, j)
            for i in range(n_ads)
            for j in range(i + 1, n_ads)
            if (i, j) not in taken
        ]
        picked = rng.choice(len(candidates), size=wanted, replace=False)
        chosen = {candidates[idx] for idx in picked}

    else:
        while len(chosen) < wanted:
            i, j = rng.integers(0, n_ads, size=2)

            if i == j:
                continue

            key = (int(min(i, j)), int(max(i, j)))

            if key in taken or key in chosen:
                continue

            chosen.add(key)

    return [AdPair(eligible[i], eligible[j], NEGATIVE_IM) for i, j in sorted(chosen)]


def write_pairs(pairs: Iterable[AdPair], path: TypePath):

    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(PAIRS_COLUMNS)

        for pair in pairs:
            writer.writerow([pair.ad_i, pair.ad_j, repr(float(pair.im))])


def read_pairs(path: TypePath) -> List[AdPair]:
    pairs = []

    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)

        if reader.fieldnames is None or list(reader.fieldnames) != list(PAIRS_COLUMNS):
            raise ValidationError(f"pairs header must be `{','.join(PAIRS_COLUMNS)}`", line=1)

        for row in reader:
            line = reader.line_num

            try:
                im = float(row['im'])

            except (TypeError, ValueError):
                raise ValidationError('interactive metric is not a number', line=line, field='im')

            if not (im == NEGATIVE_IM or 0 <= im <= 1):
                raise ValidationError('interactive metric must be -1 or within [0, 1]', line=line, field='im')

            if not row['ad_i'] < row['ad_j']:
                raise ValidationError('pair ids must be in canonical order', line=line, field='ad_j')

            pairs.append(AdPair(row['ad_i'], row['ad_j'], im))

    return pairs


def _format_number(value: Optional[float]) -> str:
    if value is None:
        return ''
    return repr(float(value))
