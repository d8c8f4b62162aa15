"""Spatial growth regressions and matching estimators for county panels."""

__version__ = "0.1.0"
