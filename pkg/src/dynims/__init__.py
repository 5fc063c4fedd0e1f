"""Feedback-controlled in-memory storage capacity on a simulated HPC cluster."""

__version__ = "0.1.0"
