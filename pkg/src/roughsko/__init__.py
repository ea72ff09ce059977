"""Gaussian rough paths, level-2 RDEs and the Stratonovich-to-Skorohod conversion."""

__version__ = "0.1.0"
