"""Kernel density estimation on the sphere with the von Mises-Fisher kernel.

Exact risk formulas, cross-validation and plug-in bandwidth selectors, the
asymptotic theory of the CV bandwidth, and a Monte Carlo harness around them.
"""

__version__ = "0.1.0"
