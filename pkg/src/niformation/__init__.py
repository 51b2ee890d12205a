"""Deterministic multi-agent formation-control simulator and NI certification toolkit."""

__version__ = "0.1.0"
