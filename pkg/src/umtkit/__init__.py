"""Desk-scale unsupervised phrase-based translation toolkit."""

__version__ = "0.1.0"
