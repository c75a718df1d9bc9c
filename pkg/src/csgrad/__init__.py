"""Compressed-sensing gradient compression for distributed SGD."""

__version__ = "0.1.0"
