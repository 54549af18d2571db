"""Adaptive programs with choice points, compiled to POMDPs and controlled online."""

__version__ = "0.1.0"
