"""Nambu-bracket formulation of embedded-submanifold geometry, with a classical oracle."""

__version__ = "0.1.0"
