"""Diachronic word embeddings for month-sliced transcript corpora."""

__version__ = "0.1.0"
