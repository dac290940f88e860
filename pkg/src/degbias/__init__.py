"""Degree-bias diagnostics and bound verification for message-passing GNNs."""

__version__ = "0.1.0"
