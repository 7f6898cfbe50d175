"""Fully biseparable 3-qubit states and their tripartite Bell violation."""

__version__ = "0.1.0"
