"""Pitch detection with engineered features and traditional machine learning."""

__version__ = "0.1.0"
