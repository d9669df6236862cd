from typing import Sequence

from .base import BidderBase, BidPlan, GroupEconomics, project
from ..exceptions import ValidationError


def bid_target_rps(groups: Sequence[GroupEconomics], rps_target: float) -> BidPlan:
    """Bids rpc / rps_target for every group.

    :param groups:
    :param rps_target: revenue per spend goal known in advance

    """
    if not rps_target > 0:
        raise ValidationError('RPS target must be positive', field='rps_target')

    bids = {group.group_id: group.rpc / rps_target for group in groups}
    spend, revenue = project(groups, bids)

    return BidPlan(
        mode='target',
        bids=bids,
        common_rps=rps_target,
        projected_spend=spend,
        projected_revenue=revenue,
    )


class TargetRpsBidder(BidderBase):
    """Common RPS goal for every group."""

    alias = 'target'
    title = 'Target RPS'

    def plan(self, groups: Sequence[GroupEconomics]) -> BidPlan:
        return bid_target_rps(groups, self.config.rps_target)
