import os
import sys

from sphinx_pyproject import SphinxConfig

# autodoc imports hho_afem from the source checkout
sys.path.insert(0, os.path.abspath(".."))

# Configuration from pyproject.toml
config = SphinxConfig("../pyproject.toml", globalns=globals())

# -- Project information -----------------------------------------------------
# https://www.sphinx-doc.org/en/master/usage/configuration.html#project-information

project = config["project"]
copyright = config["copyright"]
author = config.author
release = version = config.version
documentation_summary = config.description

# -- General configuration ---------------------------------------------------
# https://www.sphinx-doc.org/en/master/usage/configuration.html#general-configuration

extensions = config["extensions"]

templates_path = ["_templates"]
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]

autodoc_default_options = {
    "members": True,
    "undoc-members": False,
    "show-inheritance": True,
}
autodoc_member_order = "bysource"

# -- Options for HTML output -------------------------------------------------
# https://www.sphinx-doc.org/en/master/usage/configuration.html#options-for-html-output

html_baseurl = config["html_baseurl"]
html_theme = config["html_theme"]
html_static_path = []

# Auto Type Hints
typehints_defaults = config["typehints_defaults"]

# Napoleon settings
napoleon_google_docstring = False
napoleon_numpy_docstring = True
napoleon_use_rtype = False
