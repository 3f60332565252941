"""Aggregation-based low-delay rate control for WLAN downlinks."""

__version__ = "0.1.0"
