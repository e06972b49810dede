"""Geometrically consistent partial-to-full shape matching."""
__version__ = "0.1.0"
