"""Ordinal-action prompt learning for instructional videos."""

__version__ = "0.1.0"
