"""Branched-transport inference of stimulus-to-reaction routing graphs."""

__version__ = "0.1.0"
