"""Learned roadmap sampling from graph oracles."""

__version__ = "0.1.0"
