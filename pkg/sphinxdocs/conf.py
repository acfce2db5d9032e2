# Sphinx configuration for the sparseldatoolkit API docs.
#
# The module pages are generated with
#   sphinx-apidoc -o . .. ../tests ../CONSTANTS.py ../setup.py
# before `make html` (see workflow.txt).

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

# -- Project -----------------------------------------------------------------

project = 'sparseldatoolkit'
copyright = '2020, sparseldatoolkit developers'
author = 'sparseldatoolkit developers'
version = '0.1'
release = '0.1.0'

# -- General -----------------------------------------------------------------

# numpydoc-style ':param ...:' fields are read by autodoc directly; mathjax renders the
# objective and the bounds written in the docstrings.
extensions = ['sphinx.ext.autodoc',
              'sphinx.ext.intersphinx',
              'sphinx.ext.mathjax',
              'sphinx.ext.viewcode']
autodoc_member_order = 'bysource'
autodoc_mock_imports = ['matplotlib', 'seaborn']

templates_path = ['_templates']
source_suffix = ['.rst']
master_doc = 'index'
language = 'en'
exclude_patterns = ['_build', 'build/*', 'dist/*', 'sparseldatoolkit.egg-info/*', 'tests/*',
                    'examples/*', 'CONSTANTS.py', 'setup.py', 'README.md', 'SPEC_FULL.md',
                    'DESIGN.md', 'spec.md']
pygments_style = 'sphinx'

# -- HTML --------------------------------------------------------------------

html_theme = 'sphinx_rtd_theme'
html_static_path = []
htmlhelp_basename = 'sparseldatoolkitdoc'

# -- Other builders ----------------------------------------------------------

man_pages = [
    (master_doc, 'sparseldatoolkit', 'sparseldatoolkit Documentation', [author], 1)
]

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable/', None),
    'sklearn': ('https://scikit-learn.org/stable/', None),
}
