"""Time-of-arrival mobile positioning with adaptive first-path detection thresholds."""

__version__ = "0.1.0"
