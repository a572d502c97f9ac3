"""Swarm behaviour simulation, feature extraction, similarity scoring and SOM classification."""

__version__ = "0.1.0"
