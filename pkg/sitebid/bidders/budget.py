import logging
import math
from typing import Sequence, List, Tuple, Dict

import numpy as np

from .base import BidderBase, BidPlan, GroupEconomics, project
from ..exceptions import ValidationError, InfeasibleBidError, SiteBidConfigurationError

LOGGER = logging.getLogger(__name__)

BISECT_TOLERANCE = 1e-12
"""Relative spend tolerance for the bisection solver."""


def _eligible(groups: Sequence[GroupEconomics], budget: float) -> List[GroupEconomics]:

    if not budget > 0:
        raise ValidationError('budget must be positive', field='budget')

    unknown = [group.group_id for group in groups if group.rpc > 0 and group.click_slope is None]

    if unknown:
        LOGGER.warning('%s revenue-positive groups have no click slope and are excluded', len(unknown))

    eligible = [group for group in groups if group.rpc > 0 and group.click_slope is not None]

    if not eligible:
        raise InfeasibleBidError('no revenue-positive groups with a known click slope')

    return eligible


def _plan(groups: Sequence[GroupEconomics], common_rps: float, budget: float) -> BidPlan:
    bids = {}

    for group in groups:
        if group.rpc == 0:
            bids[group.group_id] = 0.0
        elif group.click_slope is not None:
            bids[group.group_id] = group.rpc / common_rps

    spend, revenue = project(groups, bids)

    return BidPlan(
        mode='budget',
        bids=bids,
        common_rps=common_rps,
        projected_spend=spend,
        projected_revenue=revenue,
        budget=budget,
    )


def bid_budget(groups: Sequence[GroupEconomics], budget: float) -> BidPlan:
    """Maximizes expected revenue under an expected spend budget.

    Optimal bids share a common RPS s* = sqrt(sum(c * rpc^2) / budget)
    and the budget is spent exactly.

    :param groups:
    :param budget: spend per unit of time

    :raises InfeasibleBidError: no revenue-positive group

    """
    eligible = _eligible(groups, budget)
    common_rps = math.sqrt(sum(group.click_slope * group.rpc ** 2 for group in eligible) / budget)

    return _plan(groups, common_rps, budget)


def bid_budget_bisect(groups: Sequence[GroupEconomics], budget: float, max_iter: int = 400) -> BidPlan:
    """Same as `bid_budget`, finding the common RPS by bisection
    on the strictly decreasing spend curve.

    :param groups:
    :param budget:
    :param max_iter:

    """
    eligible = _eligible(groups, budget)

    def spend(rps: float) -> float:
        return sum(group.click_slope * (group.rpc / rps) ** 2 for group in eligible)

    low, high = 1.0, 1.0

    while spend(high) > budget:
        high *= 2

    while spend(low) < budget:
        low /= 2

    rps = high

    for _ in range(max_iter):
        rps = (low + high) / 2
        current = spend(rps)

        if abs(current - budget) <= BISECT_TOLERANCE * budget:
            break

        if current > budget:
            low = rps
        else:
            high = rps

    return _plan(groups, rps, budget)


def brute_force_optimum(
        groups: Sequence[GroupEconomics],
        budget: float,
        grid_step: float
) -> Tuple[Dict[str, float], float]:
    """Exhaustive grid search over feasible bids maximizing expected revenue.
    Meant to cross-check `bid_budget` on tiny instances.

    Returns (bids, revenue).

    :param groups: up to three groups, all with click slopes
    :param budget:
    :param grid_step: bid grid resolution

    """
    if len(groups) > 3:
        raise ValidationError('brute force search supports up to three groups')

    if not grid_step > 0 or not budget >= 0:
        raise ValidationError('grid step must be positive and budget non-negative')

    if any(group.click_slope is None for group in groups):
        raise ValidationError('every group needs a click slope')

    axes = [
        np.arange(0.0, math.sqrt(budget / group.click_slope) + grid_step, grid_step)
        for group in groups
    ]
    mesh = np.meshgrid(*axes, indexing='ij')

    spend = sum(group.click_slope * grid ** 2 for group, grid in zip(groups, mesh))
    revenue = sum(group.click_slope * grid * group.rpc for group, grid in zip(groups, mesh))
    revenue = np.where(spend <= budget, revenue, -np.inf)

    best = np.unravel_index(int(np.argmax(revenue)), revenue.shape)
    bids = {group.group_id: float(axis[idx]) for group, axis, idx in zip(groups, axes, best)}

    return bids, float(revenue[best])


class BudgetBidder(BidderBase):
    """Revenue maximization under a spend budget."""

    alias = 'budget'
    title = 'Budget'

    def plan(self, groups: Sequence[GroupEconomics]) -> BidPlan:
        budget = self.config.budget

        if budget is None:
            raise SiteBidConfigurationError('budget mode requires `bid.budget`')

        return bid_budget(groups, budget)

