"""Multiscale LATIN domain decomposition for buckling and delamination of laminates."""
__version__ = "0.1.0"
