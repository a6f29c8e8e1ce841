"""Shortest paths and optimal control under a budget that resets on a safe set."""

__version__ = "0.1.0"
