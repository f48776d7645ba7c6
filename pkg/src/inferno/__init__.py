"""Discrete active inference with structure learning, model reduction and empathy."""

__version__ = "0.1.0"
