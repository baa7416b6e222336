"""UMAP-based dimensionality reduction toolkit for X-ray transmission hyperspectral cubes."""

__version__ = "0.1.0"
