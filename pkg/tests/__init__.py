"""Test suite for mapcones."""

__all__ = []
