"""Desk-scale federated learning pruning simulator."""

__version__ = "0.1.0"
