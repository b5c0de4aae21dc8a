"""Finite-scale constructions and checkers for Luzin-type almost disjoint families."""

__version__ = "0.1.0"
