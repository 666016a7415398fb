"""Bi-level aging dictionary learning and progression synthesis."""

__version__ = "0.1.0"
