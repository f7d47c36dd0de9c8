"""Semigroups of coupled elliptic systems with unbounded coefficients, computed on truncated boxes."""

__version__ = "0.1.0"
