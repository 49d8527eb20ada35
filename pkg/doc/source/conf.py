# Configuration file for the Sphinx documentation builder.
#
# For the full list of options see the documentation:
# http://www.sphinx-doc.org/en/master/config

import os
import sys

sys.path.insert(
    0, os.path.abspath(os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))
)

import cosmicdram  # noqa: E402

# -- Project information -----------------------------------------------------

project = "CosmicDRAM"
copyright = "2023, Matgenix SRL"
author = "Guido Petretto, David Waroquiers"

version = cosmicdram.__version__
release = cosmicdram.__version__


# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.intersphinx",
    "sphinx.ext.mathjax",
    "sphinx.ext.napoleon",
    "sphinx.ext.todo",
    "sphinx.ext.viewcode",
    "sphinx_design",
]

source_suffix = ".rst"
master_doc = "index"
language = "en"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
pygments_style = "sphinx"


# -- Options for HTML output -------------------------------------------------

html_theme = "pydata_sphinx_theme"
html_theme_options = {
    "collapse_navigation": True,
    "announcement": (
        "<p>CosmicDRAM is still in beta phase. The API may change at any time.</p>"
    ),
}
html_title = "%s v%s Manual" % (project, version)
html_last_updated_fmt = "%b %d, %Y"
html_context = {"default_mode": "light"}
html_copy_source = False
html_domain_indices = False

htmlhelp_basename = "cosmicdramdoc"


# -- Extension configuration -------------------------------------------------

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "pandas": ("https://pandas.pydata.org/docs", None),
    "scipy": ("https://docs.scipy.org/doc/scipy", None),
}

todo_include_todos = True

# Include the docstring of __init__ in the class documentation.
autoclass_content = "both"
