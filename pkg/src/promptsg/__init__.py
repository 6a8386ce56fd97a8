"""Prompt-driven video interaction graphs."""

__version__ = "0.1.0"
