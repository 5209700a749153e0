"""Discrete-event simulator for priority-aware MAC protocols in single-hop star networks."""

__version__ = "0.1.0"
