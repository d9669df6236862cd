from ..utils import register_rpc_models


def register_builtin_rpc_models():
    """Registers the built-in RPC model types."""
    from .linear import LinearRpcModel
    from .gbrt import GbrtRpcModel
    register_rpc_models(LinearRpcModel, GbrtRpcModel)
