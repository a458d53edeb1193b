"""Event-image fusion depth estimation with dual windowed/channel attention."""

__version__ = "0.1.0"
