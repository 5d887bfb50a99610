"""Numerical laboratory for the mean-field flow of the Kazdan-Warner equation on the torus."""

__version__ = '0.1.0'
