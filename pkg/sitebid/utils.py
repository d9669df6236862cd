from typing import Dict, Type, Union, Iterable, Callable, TypeVar, List
from concurrent.futures import ThreadPoolExecutor

from etc.toolbox import import_app_module, import_project_modules

from .exceptions import UnknownRpcModelError, UnknownBidderError
from .settings import APP_MODULE_NAME

if False:  # pragma: nocover
    from .rpcmodels.base import RpcModelBase  # noqa
    from .bidders.base import BidderBase

TypeRpcModel = Union[str, Type['RpcModelBase']]
TypeBidder = Union[str, Type['BidderBase']]

_RPC_MODELS_REGISTRY: Dict[str, Type['RpcModelBase']] = {}
_BIDDERS_REGISTRY: Dict[str, Type['BidderBase']] = {}

T = TypeVar('T')
R = TypeVar('R')


def register_rpc_models(*rpc_models: Type['RpcModelBase']):
    """Registers RPC model types (classes).

    :param rpc_models: RpcModelBase heir classes.

    """
    global _RPC_MODELS_REGISTRY

    for rpc_model in rpc_models:
        _RPC_MODELS_REGISTRY[rpc_model.get_alias()] = rpc_model


def get_registered_rpc_models() -> Dict[str, Type['RpcModelBase']]:
    """Returns registered RPC model types dict indexed by their aliases."""
    return _RPC_MODELS_REGISTRY


def get_registered_rpc_model(rpc_model: TypeRpcModel) -> Type['RpcModelBase']:
    """Returns registered RPC model type (class) by alias.

    :param rpc_model: RPC model alias or class

    """
    if not isinstance(rpc_model, str):
        return rpc_model

    try:
        return _RPC_MODELS_REGISTRY[rpc_model]

    except KeyError:
        raise UnknownRpcModelError(f'`{rpc_model}` RPC model is not registered')


def register_bidders(*bidders: Type['BidderBase']):
    """Registers bidders (classes).

    :param bidders: BidderBase heir classes.

    """
    global _BIDDERS_REGISTRY

    for bidder in bidders:
        _BIDDERS_REGISTRY[bidder.get_alias()] = bidder


def get_registered_bidders() -> Dict[str, Type['BidderBase']]:
    """Returns registered bidders dict indexed by their aliases."""
    return _BIDDERS_REGISTRY


def get_registered_bidder(bidder: TypeBidder) -> Type['BidderBase']:
    """Returns registered bidder (class) by alias.

    :param bidder: bidder alias or class

    """
    if not isinstance(bidder, str):
        return bidder

    try:
        return _BIDDERS_REGISTRY[bidder]

    except KeyError:
        raise UnknownBidderError(f'`{bidder}` bidder is not registered')


def import_app_sitebid_module(app: str):
    """Returns a submodule of a given app or None.

    :param app: application name

    :rtype: module or None

    """
    return import_app_module(app, APP_MODULE_NAME)


def import_project_sitebid_modules():
    """Imports sitebids modules from registered apps."""
    return import_project_modules(APP_MODULE_NAME)


def map_ordered(func: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """Applies a function to every item, possibly in a thread pool.
    Results always follow the order of the input.

    :param func:
    :param items:
    :param threads: workers cap; 1 runs inline

    """
    items = list(items)

    if threads <= 1 or len(items) <= 1:
        return [func(item) for item in items]

    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(func, items))
