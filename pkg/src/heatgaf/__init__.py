"""Heat flow on entire functions of order at most two, zero dynamics, and GAF experiments."""

__version__ = "0.1.0"
