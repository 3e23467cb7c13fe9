"""Multi-view extreme learning machine toolkit for online anomaly detection
and ranking on cloud-platform metric streams."""

__version__ = "0.1.0"
