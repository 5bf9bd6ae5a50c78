"""Hybrid bit and semantic communication link simulator."""

__version__ = "0.1.0"
