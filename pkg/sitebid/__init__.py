VERSION = (0, 1, 0)


default_app_config = 'sitebid.apps.SitebidConfig'
