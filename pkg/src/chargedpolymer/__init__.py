"""Annealed one-dimensional charged polymer: phase diagram, observables and oracles."""

__version__ = "0.1.0"
