"""Agent-based simulation engine for consistency-labeled face-forgery datasets."""

__version__ = "0.1.0"
