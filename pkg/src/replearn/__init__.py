"""Stochastic replicator-like learning in finite games, with exact oracles."""

__version__ = "0.1.0"
