"""Helpers for writing adapters, plus a synthetic benchmark adapter."""

from .protocol import serve

__all__ = ["serve"]
