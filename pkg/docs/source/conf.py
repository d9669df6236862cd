# django-sitebid documentation build configuration file.

import sys, os

sys.path.insert(0, os.path.abspath('../../'))
from sitebid import VERSION

# -- General configuration -----------------------------------------------------

extensions = ['sphinx.ext.autodoc']

autodoc_mock_imports = ['django', 'etc', 'numpy', 'torch']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'django-sitebid'

version = '.'.join(map(str, VERSION))
release = '.'.join(map(str, VERSION))

exclude_patterns = []

pygments_style = 'sphinx'

# -- Options for HTML output ---------------------------------------------------

html_theme = 'default'
html_static_path = ['_static']
htmlhelp_basename = 'django-sitebiddoc'

# -- Options for manual page output --------------------------------------------

man_pages = [
    ('index', 'django-sitebid', u'django-sitebid Documentation', [], 1)
]
