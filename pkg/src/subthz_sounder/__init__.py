"""Simulated sub-THz directional channel sounding in a street canyon."""

__version__ = "0.1.0"
