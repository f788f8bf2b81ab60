"""Dispatch planning for solar tower plants with thermal storage."""

__version__ = "0.1.0"
