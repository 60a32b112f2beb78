"""Numerical laboratory for Fueter sections into model hyperkähler targets."""

__version__ = "0.1.0"

CONVENTION_TABLE_VERSION = 1
