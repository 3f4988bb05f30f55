"""Ruin of Gaussian risk processes with loss-carry-forward tax."""

__version__ = "0.1.0"
