from ..utils import register_bidders


def register_builtin_bidders():
    """Registers the built-in bidders."""
    from .target import TargetRpsBidder
    from .budget import BudgetBidder
    register_bidders(TargetRpsBidder, BudgetBidder)
