"""Occupancy detection from indoor environmental quality sensors."""

__version__ = "0.1.0"
