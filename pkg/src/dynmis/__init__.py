"""Fully dynamic maximal independent set maintenance in a simulated CONGEST network."""

__version__ = "0.1.0"
