"""Agentic feature generation from clinical notes, with the labeling,
baseline and evaluation machinery needed to compare feature sets."""

__version__ = "0.1.0"
