"""Explicit ReLU network constructions with certified error bounds, sizing formulas and rate experiments."""

from .net import Network, NetworkStats, compose, evaluate, parallelize, stats

__all__ = ["Network", "NetworkStats", "compose", "evaluate", "parallelize", "stats"]
__version__ = "0.1.0"
