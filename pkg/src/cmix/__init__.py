"""Bernstein-type concentration for C-mixing processes and random fields, with kernel estimators."""
from . import bounds, empirical_process, harness, processes, smoothers

__all__ = ["bounds", "empirical_process", "harness", "processes", "smoothers"]
__version__ = "0.1.0"
