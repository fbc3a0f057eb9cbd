"""Order-to-Payment customer experience data mart."""

__version__ = "0.1.0"
