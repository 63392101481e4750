"""Simulator and evaluation toolkit for a visual quality-control line for canned goods."""

__version__ = "0.1.0"
