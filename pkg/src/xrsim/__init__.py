"""Slot-level simulator of XR traffic over a 5G-Advanced NR cell."""

__version__ = "0.1.0"
