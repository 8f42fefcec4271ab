"""Temporal severity association and severity-weighted hotspot analysis for incident data."""
__version__ = "0.1.0"
