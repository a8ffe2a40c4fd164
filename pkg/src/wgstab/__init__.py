"""Driven-dissipative entanglement of waveguide-coupled emitters."""

__version__ = "0.1.0"
