"""Random products of plane polynomial automorphisms: normal forms, filtrations, Green functions."""

__version__ = "0.1.0"
