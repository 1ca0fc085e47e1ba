"""Cascaded plane-sweep multi-view stereo with adaptive depth intervals."""

__version__ = "0.1.0"
