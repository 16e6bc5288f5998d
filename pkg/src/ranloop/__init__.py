"""Deterministic workbench for intent-driven RAN management."""

__version__ = "0.1.0"
