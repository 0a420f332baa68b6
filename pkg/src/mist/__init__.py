"""Deep clustering with a symmetric InfoNCE topological-invariance penalty on an IMSAT-style objective."""

__version__ = "0.1.0"
