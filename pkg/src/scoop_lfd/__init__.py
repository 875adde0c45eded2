"""Learning-from-demonstration pipeline for a planar scooping task."""

__version__ = "0.1.0"
