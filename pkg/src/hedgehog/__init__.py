"""Forward and inverse spectral problems for Sturm-Liouville operators on hedgehog graphs.

A hedgehog graph is a cycle with pendant (boundary) edges attached at its
vertices.  Submodules are imported on demand; this package module stays free
of numerical imports so the command-line front end can cap thread pools
before numpy loads.
"""

__version__ = "0.1.0"
