import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Dict, Iterable, List, Union, Sequence

from ..exceptions import ValidationError

if False:  # pragma: nocover
    from ..config import BidConfig  # noqa

TypePath = Union[str, Path]

ECONOMICS_COLUMNS = ('group_id', 'rpc', 'click_slope')
BIDS_COLUMNS = ('group_id', 'bid')


@dataclass(frozen=True)
class GroupEconomics:
    """Predicted value and click response of an ad group.

    Expected clicks at bid `b` are `click_slope * b` (per unit of time).

    """
    group_id: str
    rpc: float
    click_slope: Optional[float] = None

    def __post_init__(self):
        if not self.rpc >= 0:
            raise ValidationError(f'group `{self.group_id}` rpc must be non-negative', field='rpc')

        if self.click_slope is not None and not self.click_slope > 0:
            raise ValidationError(f'group `{self.group_id}` click slope must be positive', field='click_slope')


@dataclass(frozen=True)
class BidPlan:
    """Bids per group with projected outcomes."""

    mode: str
    bids: Dict[str, float] = field(default_factory=dict)
    common_rps: float = 0.0
    """Equalized revenue per spend: rpc / bid for every revenue-positive group."""

    projected_spend: float = 0.0
    projected_revenue: float = 0.0
    budget: Optional[float] = None

    @property
    def summary_line(self) -> str:
        """One-line report: `mode,common_rps,spend,revenue,budget`."""
        budget = '' if self.budget is None else repr(float(self.budget))

        return ','.join([
            self.mode,
            repr(float(self.common_rps)),
            repr(float(self.projected_spend)),
            repr(float(self.projected_revenue)),
            budget,
        ])


def project(groups: Iterable[GroupEconomics], bids: Dict[str, float]):
    """Returns (spend, revenue) expected for bids under linear click response.
    Groups without a click slope contribute nothing.

    """
    spend = revenue = 0.0

    for group in groups:
        bid = bids.get(group.group_id)

        if bid is None or group.click_slope is None:
            continue

        spend += group.click_slope * bid * bid
        revenue += group.click_slope * bid * group.rpc

    return spend, revenue


def kkt_check(plan: BidPlan, groups: Iterable[GroupEconomics]) -> float:
    """Returns the spread of marginal values rpc / (2 * bid) over
    revenue-positive groups, relative to their mean. An optimal plan gives 0.

    :param plan:
    :param groups:

    """
    marginals = []

    for group in groups:
        bid = plan.bids.get(group.group_id)

        if group.rpc > 0 and bid:
            marginals.append(group.rpc / (2 * bid))

    if len(marginals) < 2:
        return 0.0

    mean = sum(marginals) / len(marginals)

    return max(abs(value - mean) for value in marginals) / mean


def estimate_click_slope(clicks: float, spend: float, duration: float) -> Optional[float]:
    """Estimates click slope from history under first-price accounting:
    the historical bid is spend / clicks, so slope = clicks^2 / (spend * duration).

    Returns None when there is no click or spend history.

    :param clicks:
    :param spend:
    :param duration:

    """
    if not (clicks and spend and clicks > 0 and spend > 0 and duration > 0):
        return None

    return clicks * clicks / (spend * duration)


def write_bids(plan: BidPlan, path: TypePath):

    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(BIDS_COLUMNS)

        for group_id, bid in plan.bids.items():
            writer.writerow([group_id, repr(float(bid))])


def write_economics(groups: Iterable[GroupEconomics], path: TypePath):

    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(ECONOMICS_COLUMNS)

        for group in groups:
            slope = '' if group.click_slope is None else repr(float(group.click_slope))
            writer.writerow([group.group_id, repr(float(group.rpc)), slope])


def read_economics(path: TypePath) -> List[GroupEconomics]:
    """Reads `group_id,rpc,click_slope` rows; empty slope means unknown."""
    groups = []
    seen = set()

    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)

        if reader.fieldnames is None or list(reader.fieldnames) != list(ECONOMICS_COLUMNS):
            raise ValidationError(f"economics header must be `{','.join(ECONOMICS_COLUMNS)}`", line=1)

        for row in reader:
            line = reader.line_num
            group_id = row['group_id']

            if not group_id or group_id in seen:
                raise ValidationError('group id is empty or repeated', line=line, field='group_id')

            seen.add(group_id)
            values = {}

            for name in ('rpc', 'click_slope'):
                raw = (row[name] or '').strip()

                try:
                    values[name] = float(raw) if raw else None

                except ValueError:
                    raise ValidationError('not a number', line=line, field=name)

                if values[name] is not None and not math.isfinite(values[name]):
                    raise ValidationError('must be finite', line=line, field=name)

            if values['rpc'] is None:
                raise ValidationError('rpc is required', line=line, field='rpc')

            try:
                groups.append(GroupEconomics(group_id, values['rpc'], values['click_slope']))

            except ValidationError as e:
                raise ValidationError(str(e), line=line)

    return groups


class BidderBase:
    """Base class for bidders turning group economics into a bid plan."""

    alias: str = None
    """Bidder alias to address it from config and command line."""

    title: str = None

    def __init__(self, config: 'BidConfig'):
        self.config = config

    @classmethod
    def get_alias(cls) -> str:
        """Returns bidder alias."""

        if cls.alias is None:
            cls.alias = cls.__name__

        return cls.alias

    def __str__(self) -> str:
        return self.__class__.get_alias()

    def plan(self, groups: Sequence[GroupEconomics]) -> BidPlan:
        """This method should be implemented by a heir to compute bids.

        :param groups:

        """
        raise NotImplementedError  # pragma: nocover
