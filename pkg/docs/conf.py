# -*- coding: utf-8 -*-
#
# sac-actor-lab documentation build configuration file.

import os
import sys

sys.path.insert(0, os.path.abspath('..'))

try:
    from sphinxcontrib import spelling
except ImportError:
    spelling = None

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.doctest',
]
if spelling:
    extensions.append('sphinxcontrib.spelling')

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'sac-actor-lab'
copyright = '2026, sac-actor-lab contributors'
author = 'sac-actor-lab contributors'

with open(os.path.join(os.path.dirname(__file__), '..',
                       'sac_actor_lab', 'version.txt')) as stream:
    release = stream.read().strip()
version = '.'.join(release.split('.')[:2])

exclude_patterns = ['_build']
pygments_style = 'sphinx'
todo_include_todos = False

html_theme = 'alabaster'
htmlhelp_basename = 'sac-actor-labdoc'
