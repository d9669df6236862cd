from django.apps import AppConfig
from django.utils.translation import gettext_lazy as _


class SitebidConfig(AppConfig):
    """Sitebid configuration."""

    name = 'sitebid'
    verbose_name = _('Search bidding')

    def ready(self):
        from sitebid.utils import import_project_sitebid_modules
        import_project_sitebid_modules()

        from sitebid.settings import INIT_BUILTIN_TYPES
        if INIT_BUILTIN_TYPES:
            from sitebid.rpcmodels import register_builtin_rpc_models
            from sitebid.bidders import register_builtin_bidders
            register_builtin_rpc_models()
            register_builtin_bidders()
